use super::{DiffError, Tape, Tensor, Var};

/// Per-input outcome of a finite-difference check.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a ReLU-family input sits on or crosses
    /// its kink within `±eps`.
    pub skipped_kinks: usize,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
    /// Set when the forward pass produced NaN/Inf or failed outright.
    pub failure: Option<String>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.max_rel_error() < self.tolerance
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

fn evaluate<F>(f: &F, inputs: &[(String, Tensor)]) -> Result<(f64, u64), String>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars).map_err(|e| e.to_string())?;
    let value = tape.scalar(loss);
    if let Some((at, op)) = tape.first_non_finite() {
        return Err(format!("non-finite value from {op} at tape position {at}"));
    }
    if !value.is_finite() {
        return Err(format!("non-finite loss {value}"));
    }
    Ok((value, tape.kink_pattern().0))
}

/// Compares analytic gradients of the scalar produced by `f` against
/// fourth-order central finite differences with step `eps`:
/// `(8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h`.
///
/// `f` receives one tape variable per entry of `inputs`, in order. Each
/// coordinate of each input is perturbed in turn; coordinates whose
/// perturbations (up to `±2 eps`) change the sign pattern of any ReLU-family input are
/// excluded and counted in [`ParamCheck::skipped_kinks`].
pub fn gradcheck<F>(inputs: &[(String, Tensor)], eps: f64, tolerance: f64, f: F) -> GradcheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let mut report = GradcheckReport {
        tolerance,
        params: Vec::new(),
        failure: None,
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let loss = match f(&mut tape, &vars) {
        Ok(l) => l,
        Err(e) => {
            report.failure = Some(e.to_string());
            return report;
        }
    };
    if let Some((at, op)) = tape.first_non_finite() {
        report.failure = Some(format!("non-finite value from {op} at tape position {at}"));
        return report;
    }
    let grads = match tape.backward(loss) {
        Ok(g) => g,
        Err(e) => {
            report.failure = Some(e.to_string());
            return report;
        }
    };
    let base_pattern = tape.kink_pattern().0;
    drop(tape);

    let mut work: Vec<(String, Tensor)> = inputs.to_vec();
    for (k, (name, value)) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], value.nrows(), value.ncols());
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            checked: 0,
            skipped_kinks: 0,
        };
        for idx in 0..value.len() {
            let (r, c) = (idx / value.ncols(), idx % value.ncols());
            let orig = value[[r, c]];
            let mut at = |offset: f64| {
                work[k].1[[r, c]] = orig + offset;
                evaluate(&f, &work)
            };
            let evals = [at(2.0 * eps), at(eps), at(-eps), at(-2.0 * eps)];
            work[k].1[[r, c]] = orig;
            let mut values = [0.0; 4];
            let mut crossed = false;
            for (slot, e) in values.iter_mut().zip(evals) {
                match e {
                    Ok((v, pattern)) => {
                        *slot = v;
                        crossed |= pattern != base_pattern;
                    }
                    Err(e) => {
                        report.failure = Some(e);
                        report.params.push(check);
                        return report;
                    }
                }
            }
            if crossed {
                check.skipped_kinks += 1;
                continue;
            }
            let [f2, f1, m1, m2] = values;
            let numeric = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * eps);
            check.max_rel_error = check.max_rel_error.max(rel_error(analytic[[r, c]], numeric));
            check.checked += 1;
        }
        report.params.push(check);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::sync::Arc;

    fn inputs(v: &[(&str, Tensor)]) -> Vec<(String, Tensor)> {
        v.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    #[test]
    fn smooth_ops_pass() {
        let x = array![[0.3, -1.2, 0.7], [1.1, 0.4, -0.5]];
        let w = array![[0.2, -0.3, 0.9], [0.5, 0.1, -0.7], [1.3, -0.2, 0.4]];
        let report = gradcheck(&inputs(&[("x", x), ("w", w)]), 1e-5, 1e-4, |t, v| {
            let h = t.matmul_t(v[0], v[1])?;
            let s = t.sigmoid(h)?;
            let u = t.tanh(s)?;
            let p = t.softplus(u)?;
            let e = t.exp(p)?;
            let l = t.log(e)?;
            let q = t.sqrt(l)?;
            t.sum_all(q)
        });
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn segment_and_batchnorm_pass() {
        let x = array![[0.3, -1.2], [1.1, 0.4], [-0.6, 0.9], [0.2, 0.2], [1.7, -0.8]];
        let score = array![[0.5], [-0.1], [1.3], [0.2], [-0.9]];
        let gamma = array![[1.2, 0.7]];
        let beta = array![[0.1, -0.3]];
        let seg = Arc::new(vec![0, 1, 0, 2, 1]);
        let report = gradcheck(
            &inputs(&[("x", x), ("score", score), ("gamma", gamma), ("beta", beta)]),
            1e-5,
            1e-4,
            |t, v| {
                let a = t.segment_softmax(v[1], &seg, 3)?;
                let m = t.mul_col(v[0], a)?;
                let s = t.segment_sum(m, &seg, 3)?;
                let (bn, _, _) = t.batch_norm(s, v[2], v[3], None, 1e-5)?;
                let sq = t.square(bn)?;
                let w = t.mul(sq, bn)?;
                t.sum_all(w)
            },
        );
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn relu_at_zero_is_excluded() {
        let x = array![[0.0, 0.5, -0.5]];
        let report = gradcheck(&inputs(&[("x", x)]), 1e-5, 1e-4, |t, v| {
            let r = t.relu(v[0])?;
            let s = t.square(r)?;
            t.sum_all(s)
        });
        assert_eq!(report.params[0].checked, 2);
        assert_eq!(report.params[0].skipped_kinks, 1);
        assert!(report.passed());
        assert!(report.failure.is_none());
    }

    #[test]
    fn non_finite_forward_is_reported() {
        let x = array![[-1.0]];
        let report = gradcheck(&inputs(&[("x", x)]), 1e-5, 1e-4, |t, v| {
            let l = t.log(v[0])?;
            t.sum_all(l)
        });
        assert!(!report.passed());
        assert!(report.failure.unwrap().contains("log"));
    }
}
