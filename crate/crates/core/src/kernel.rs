//! Deformed-softmax transition kernels and the explicit transport step they
//! drive. The same machinery serves the logit dynamic (values = utilities)
//! and the Fokker-Planck sweep (values = value functions).
//!
//! With `E_{a,b} = exp_q((v_a - v_b) / eta)` and `D_b = sum_o E_{o,b} dx`, the
//! kernel is `phi_{a,b} = E_{a,b} / D_b`: the rate density of moving from
//! cell `b` to cell `a`. Every column integrates to one. All reductions run in
//! ascending index order, so the parallel and sequential paths agree bit for
//! bit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tsallis::{ExpKernel, PairFn, TsallisParams, WithPair};

/// Columns per rayon task.
const PAR_CHUNK: usize = 16;

/// Dense kernel `phi[a][b]` (destination `a`, source `b`), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    n: usize,
    data: Vec<f64>,
}

impl TransitionKernel {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `phi[to][from]`.
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.data[to * self.n + from]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    /// `sum_a phi[a][b] dx` for every column `b`.
    pub fn column_masses(&self, dx: f64) -> Vec<f64> {
        (0..self.n)
            .map(|b| (0..self.n).map(|a| self.get(a, b)).sum::<f64>() * dx)
            .collect()
    }
}

fn undefined(params: &TsallisParams, values: &[f64]) -> Error {
    let inv_eta = 1.0 / params.eta();
    let c = 1.0 - params.q();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    // the worst argument is the largest positive difference when q > 1
    let z = (hi - lo) * inv_eta;
    debug_assert!(c < 0.0);
    Error::UndefinedDeformedExp { q: params.q(), z }
}

/// Materialized kernel for one slice of values.
pub fn softmax_kernel(params: &TsallisParams, values: &[f64], dx: f64) -> Result<TransitionKernel> {
    let n = values.len();
    let mut cols = vec![0.0; n * n];
    let mut col_e = vec![0.0; n];
    let mut col_eq = vec![0.0; n];
    fill_columns(params, values, &mut cols, &mut col_e, &mut col_eq, false, Fill::Exp)?;
    let mut data = vec![0.0; n * n];
    for b in 0..n {
        let denom = col_e[b] * dx;
        for a in 0..n {
            data[a * n + b] = cols[b * n + a] / denom;
        }
    }
    Ok(TransitionKernel { n, data })
}

#[derive(Clone, Copy)]
enum Fill {
    /// Store `E` in the column buffer.
    Exp,
    /// Store `E^q` in the column buffer.
    ExpPowQ,
}

struct ColumnFill<'a> {
    values: &'a [f64],
    inv_eta: f64,
    cols: &'a mut [f64],
    col_e: &'a mut [f64],
    col_eq: &'a mut [f64],
    parallel: bool,
    fill: Fill,
}

#[inline(always)]
fn one_column<P: PairFn>(pair: P, values: &[f64], vb: f64, inv_eta: f64, col: &mut [f64], fill: Fill) -> (f64, f64) {
    let mut se = 0.0;
    let mut seq = 0.0;
    match fill {
        Fill::Exp => {
            for (out, &va) in col.iter_mut().zip(values) {
                let (e, eq) = pair((va - vb) * inv_eta);
                *out = e;
                se += e;
                seq += eq;
            }
        }
        Fill::ExpPowQ => {
            for (out, &va) in col.iter_mut().zip(values) {
                let (e, eq) = pair((va - vb) * inv_eta);
                *out = eq;
                se += e;
                seq += eq;
            }
        }
    }
    (se, seq)
}

impl WithPair for ColumnFill<'_> {
    type Output = ();

    fn run<P: PairFn>(self, pair: P) {
        let n = self.values.len();
        let values = self.values;
        let inv_eta = self.inv_eta;
        let fill = self.fill;
        if self.parallel {
            self.cols
                .par_chunks_mut(n * PAR_CHUNK)
                .zip(self.col_e.par_chunks_mut(PAR_CHUNK))
                .zip(self.col_eq.par_chunks_mut(PAR_CHUNK))
                .enumerate()
                .for_each(|(chunk, ((cols, se), seq))| {
                    for (j, col) in cols.chunks_exact_mut(n).enumerate() {
                        let b = chunk * PAR_CHUNK + j;
                        let (e, eq) = one_column(pair, values, values[b], inv_eta, col, fill);
                        se[j] = e;
                        seq[j] = eq;
                    }
                });
        } else {
            for (b, col) in self.cols.chunks_exact_mut(n).enumerate() {
                let (e, eq) = one_column(pair, values, values[b], inv_eta, col, fill);
                self.col_e[b] = e;
                self.col_eq[b] = eq;
            }
        }
    }
}

/// Column `b` of `cols` receives `E_{.,b}` or `E^q_{.,b}`; `col_e[b]` and
/// `col_eq[b]` receive the unscaled column sums.
fn fill_columns(
    params: &TsallisParams,
    values: &[f64],
    cols: &mut [f64],
    col_e: &mut [f64],
    col_eq: &mut [f64],
    parallel: bool,
    fill: Fill,
) -> Result<()> {
    let kernel: ExpKernel = params.kernel();
    kernel.with_pair(ColumnFill {
        values,
        inv_eta: 1.0 / params.eta(),
        cols,
        col_e,
        col_eq,
        parallel,
        fill,
    });
    if col_e.iter().any(|s| !s.is_finite()) {
        return Err(undefined(params, values));
    }
    Ok(())
}

struct PartitionSums<'a> {
    values: &'a [f64],
    inv_eta: f64,
    out: &'a mut [f64],
    parallel: bool,
}

impl WithPair for PartitionSums<'_> {
    type Output = ();

    fn run<P: PairFn>(self, pair: P) {
        let values = self.values;
        let inv_eta = self.inv_eta;
        let column = |vb: f64| -> f64 {
            let mut s = 0.0;
            for &va in values {
                s += pair((va - vb) * inv_eta).0;
            }
            s
        };
        if self.parallel {
            self.out
                .par_iter_mut()
                .zip(values.par_iter())
                .for_each(|(o, &vb)| *o = column(vb));
        } else {
            for (o, &vb) in self.out.iter_mut().zip(values) {
                *o = column(vb);
            }
        }
    }
}

/// `out[l] = sum_m exp_q((v_m - v_l) / eta)` (without the `dx` factor).
pub(crate) fn partition_sums(
    params: &TsallisParams,
    values: &[f64],
    out: &mut [f64],
    parallel: bool,
) -> Result<()> {
    params.kernel().with_pair(PartitionSums {
        values,
        inv_eta: 1.0 / params.eta(),
        out,
        parallel,
    });
    if out.iter().any(|s| !s.is_finite()) {
        return Err(undefined(params, values));
    }
    Ok(())
}

/// Scratch buffers for repeated transport steps on one grid size.
#[derive(Debug, Clone)]
pub(crate) struct Transport {
    n: usize,
    cols: Vec<f64>,
    col_e: Vec<f64>,
    col_eq: Vec<f64>,
    rate: Vec<f64>,
    weight: Vec<f64>,
    inflow: Vec<f64>,
}

impl Transport {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            n,
            cols: vec![0.0; n * n],
            col_e: vec![0.0; n],
            col_eq: vec![0.0; n],
            rate: vec![0.0; n],
            weight: vec![0.0; n],
            inflow: vec![0.0; n],
        }
    }

    /// One explicit step
    /// `mu'_l = mu_l + dt (sum_m phi_{l,m}^q mu_m dx - (sum_m phi_{m,l}^q dx) mu_l)`,
    /// evaluated as `mu_l (1 - dt rate_l) + dt inflow_l`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step(
        &mut self,
        params: &TsallisParams,
        values: &[f64],
        mu: &[f64],
        dx: f64,
        dt: f64,
        out: &mut [f64],
        parallel: bool,
    ) -> Result<()> {
        let n = self.n;
        assert_eq!(values.len(), n);
        assert_eq!(mu.len(), n);
        assert_eq!(out.len(), n);
        fill_columns(
            params,
            values,
            &mut self.cols,
            &mut self.col_e,
            &mut self.col_eq,
            parallel,
            Fill::ExpPowQ,
        )?;
        let kernel = params.kernel();
        for b in 0..n {
            let denom_q = kernel.pow_q(self.col_e[b] * dx);
            self.rate[b] = self.col_eq[b] * dx / denom_q;
            self.weight[b] = mu[b] * dx / denom_q;
        }

        let cols = &self.cols;
        let weight = &self.weight;
        let accumulate = |start: usize, inflow: &mut [f64]| {
            inflow.iter_mut().for_each(|v| *v = 0.0);
            let len = inflow.len();
            for (b, &w) in weight.iter().enumerate() {
                let col = &cols[b * n + start..b * n + start + len];
                for (acc, &c) in inflow.iter_mut().zip(col) {
                    *acc += c * w;
                }
            }
        };
        if parallel {
            self.inflow
                .par_chunks_mut(PAR_CHUNK)
                .enumerate()
                .for_each(|(chunk, inflow)| accumulate(chunk * PAR_CHUNK, inflow));
        } else {
            accumulate(0, &mut self.inflow);
        }

        for l in 0..n {
            out[l] = mu[l] * (1.0 - dt * self.rate[l]) + dt * self.inflow[l];
        }
        Ok(())
    }
}
