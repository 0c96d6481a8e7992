//! Central-difference gradient checking.
//!
//! `grad_check` evaluates a differentiable map twice per probed input
//! element ((f(x+eps) - f(x-eps)) / 2eps) and compares against the tape's
//! analytic gradient. Checks run in f64; the reported error for element i is
//!
//!   |analytic - numeric| / max(|analytic|, |numeric|, 0.01)
//!
//! so tiny gradients are compared absolutely (floor 0.01) and large ones
//! relatively. Non-finite values on either side fail the check outright.

use crate::array::Array;
use crate::graph::{Graph, Var};
use crate::param::{ParamId, ParamStore};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_EPS: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-2;

/// A differentiable map under test: given a graph and one Var per input,
/// produce a single output Var (any shape; the checker sums it).
pub type CheckFn = dyn Fn(&mut Graph<f64>, &[Var]) -> Var;

/// A parameterized block under test: reads weights from the store.
pub type BlockFn = dyn Fn(&mut Graph<f64>, &mut ParamStore<f64>, &[Var]) -> Var;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    /// Max relative error per checked tensor, labeled.
    pub labels: Vec<String>,
    pub per_input: Vec<f64>,
    /// (tensor index, element index) of the worst error.
    pub worst: (usize, usize),
    pub max_rel_err: f64,
    pub tol: f64,
    /// Set when an analytic or numeric gradient was non-finite.
    pub non_finite: bool,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        !self.non_finite && self.max_rel_err <= self.tol
    }

    pub fn table_line(&self) -> String {
        format!(
            "{:<34} max_rel_err={:.3e} tol={:.1e} {}",
            self.name,
            self.max_rel_err,
            self.tol,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn eval_sum(f: &CheckFn, inputs: &[Array<f64>]) -> f64 {
    let mut g = Graph::<f64>::inference();
    let vars: Vec<Var> = inputs.iter().map(|a| g.leaf(a.clone(), false)).collect();
    let out = f(&mut g, &vars);
    g.value(out).data().iter().sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    if !a.is_finite() || !n.is_finite() {
        return f64::INFINITY;
    }
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Check the gradient of `sum(f(inputs))` w.r.t. every input element, or a
/// seeded random subset of `max_samples_per_input` elements when given.
pub fn grad_check(
    name: &str,
    f: &CheckFn,
    inputs: &[Array<f64>],
    eps: f64,
    tol: f64,
    max_samples_per_input: Option<usize>,
) -> CheckReport {
    // Analytic pass.
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|a| g.leaf(a.clone(), true)).collect();
    let out = f(&mut g, &vars);
    let loss = g.sum_all(out);
    g.backward(loss);
    let analytic: Vec<Array<f64>> = vars
        .iter()
        .zip(inputs.iter())
        .map(|(&v, a)| g.grad(v).cloned().unwrap_or_else(|| Array::zeros(a.shape())))
        .collect();

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut worst = (0usize, 0usize);
    let mut max_err = 0.0f64;
    let mut non_finite = false;

    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);

    for (i, base) in inputs.iter().enumerate() {
        let n = base.numel();
        let probes: Vec<usize> = match max_samples_per_input {
            Some(k) if k < n => {
                let mut picked: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
                picked.sort_unstable();
                picked.dedup();
                picked
            }
            _ => (0..n).collect(),
        };
        let mut input_max = 0.0f64;
        for &j in &probes {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            plus[i].data_mut()[j] += eps;
            minus[i].data_mut()[j] -= eps;
            let numeric = (eval_sum(f, &plus) - eval_sum(f, &minus)) / (2.0 * eps);
            let a = analytic[i].data()[j];
            if !a.is_finite() || !numeric.is_finite() {
                non_finite = true;
            }
            let e = rel_err(a, numeric);
            if e > input_max {
                input_max = e;
            }
            if e > max_err {
                max_err = e;
                worst = (i, j);
            }
        }
        per_input.push(input_max);
    }

    CheckReport {
        name: name.to_string(),
        labels: (0..inputs.len()).map(|i| format!("input{i}")).collect(),
        per_input,
        worst,
        max_rel_err: max_err,
        tol,
        non_finite,
    }
}

/// Gradient check for a parameterized block: verifies gradients w.r.t. the
/// data inputs and every listed parameter (or all trainable parameters when
/// `params` is None). Each numeric evaluation runs on a fresh clone of the
/// store, so batch-norm running-stat updates cannot leak between probes.
#[allow(clippy::too_many_arguments)]
pub fn grad_check_block(
    name: &str,
    f: &BlockFn,
    inputs: &[Array<f64>],
    store: &ParamStore<f64>,
    params: Option<&[ParamId]>,
    eps: f64,
    tol: f64,
    max_samples_per_tensor: Option<usize>,
) -> CheckReport {
    let param_ids: Vec<ParamId> = match params {
        Some(p) => p.to_vec(),
        None => store.trainable_ids(),
    };

    // Analytic pass on a clone sharing the original store identity scheme.
    let mut store_a = store.clone();
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|a| g.leaf(a.clone(), true)).collect();
    let out = f(&mut g, &mut store_a, &vars);
    let loss = g.sum_all(out);
    g.backward(loss);
    let mut analytic: Vec<Array<f64>> = vars
        .iter()
        .zip(inputs.iter())
        .map(|(&v, a)| g.grad(v).cloned().unwrap_or_else(|| Array::zeros(a.shape())))
        .collect();
    for &id in &param_ids {
        analytic.push(
            g.param_grad(&store_a, id)
                .cloned()
                .unwrap_or_else(|| Array::zeros(store.value(id).shape())),
        );
    }

    let eval = |xs: &[Array<f64>], st: &ParamStore<f64>| -> f64 {
        let mut st = st.clone();
        let mut g = Graph::<f64>::inference();
        let vars: Vec<Var> = xs.iter().map(|a| g.leaf(a.clone(), false)).collect();
        let out = f(&mut g, &mut st, &vars);
        g.value(out).data().iter().sum()
    };

    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(0x51ce5eed);
    let mut labels = Vec::new();
    let mut per_input = Vec::new();
    let mut worst = (0usize, 0usize);
    let mut max_err = 0.0f64;
    let mut non_finite = false;

    let mut probe = |tensor_idx: usize,
                     label: String,
                     base_at: &dyn Fn(usize, f64) -> f64,
                     numel: usize,
                     analytic: &Array<f64>,
                     rng: &mut ChaCha8Rng| {
        let probes: Vec<usize> = match max_samples_per_tensor {
            Some(k) if k < numel => {
                let mut picked: Vec<usize> = (0..k).map(|_| rng.gen_range(0..numel)).collect();
                picked.sort_unstable();
                picked.dedup();
                picked
            }
            _ => (0..numel).collect(),
        };
        let mut tensor_max = 0.0f64;
        for &j in &probes {
            let plus = base_at(j, eps);
            let minus = base_at(j, -eps);
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[j];
            if !a.is_finite() || !numeric.is_finite() {
                non_finite = true;
            }
            let e = rel_err(a, numeric);
            if e > tensor_max {
                tensor_max = e;
            }
            if e > max_err {
                max_err = e;
                worst = (tensor_idx, j);
            }
        }
        labels.push(label);
        per_input.push(tensor_max);
    };

    for (i, base) in inputs.iter().enumerate() {
        let eval_shifted = |j: usize, delta: f64| -> f64 {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[j] += delta;
            eval(&xs, store)
        };
        probe(i, format!("input{i}"), &eval_shifted, base.numel(), &analytic[i], &mut rng);
    }
    for (k, &id) in param_ids.iter().enumerate() {
        let eval_shifted = |j: usize, delta: f64| -> f64 {
            let mut st = store.clone();
            let mut v = st.value(id).clone();
            v.data_mut()[j] += delta;
            st.set_value(id, v);
            eval(inputs, &st)
        };
        probe(
            inputs.len() + k,
            store.entry(id).path.clone(),
            &eval_shifted,
            store.value(id).numel(),
            &analytic[inputs.len() + k],
            &mut rng,
        );
    }

    CheckReport {
        name: name.to_string(),
        labels,
        per_input,
        worst,
        max_rel_err: max_err,
        tol,
        non_finite,
    }
}
