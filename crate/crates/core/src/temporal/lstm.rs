use rand::Rng;

use super::CellActivation;
use crate::autodiff::{DiffError, Tape, Var};
use crate::params::{glorot, zeros, ParamId, ParamSet};

/// One LSTM layer with gate blocks stacked in the order `[f, i, o, c]`:
/// `W` is `4H × input`, `U` is `4H × H`, `b` is `1 × 4H`.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

impl LstmLayer {
    pub fn new(params: &mut ParamSet, rng: &mut impl Rng, prefix: &str, input: usize, hidden: usize) -> Self {
        let mut w = zeros(4 * hidden, input);
        let mut u = zeros(4 * hidden, hidden);
        for g in 0..4 {
            let rows = g * hidden..(g + 1) * hidden;
            w.slice_mut(ndarray::s![rows.clone(), ..]).assign(&glorot(rng, hidden, input));
            u.slice_mut(ndarray::s![rows, ..]).assign(&glorot(rng, hidden, hidden));
        }
        Self {
            input,
            hidden,
            w: params.insert(format!("{prefix}.w"), w),
            u: params.insert(format!("{prefix}.u"), u),
            b: params.insert(format!("{prefix}.b"), zeros(1, 4 * hidden)),
        }
    }

    /// ```text
    /// f = σ(W_f x + U_f h + b_f)    i = σ(…)    o = σ(…)
    /// c' = f ∘ c + i ∘ act(W_c x + U_c h + b_c)
    /// h' = o ∘ act(c')
    /// ```
    pub fn step(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        h: Var,
        c: Var,
        cell: CellActivation,
    ) -> Result<(Var, Var), DiffError> {
        let zx = self.project_input(tape, vars, x)?;
        self.step_projected(tape, vars, zx, h, c, cell)
    }

    /// `x Wᵀ`, which can be computed for many steps at once.
    pub fn project_input(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var, DiffError> {
        tape.matmul_t(x, vars[self.w.index()])
    }

    /// [`LstmLayer::step`] given the projected input `x Wᵀ`.
    pub fn step_projected(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        zx: Var,
        h: Var,
        c: Var,
        cell: CellActivation,
    ) -> Result<(Var, Var), DiffError> {
        let hd = self.hidden;
        let zh = tape.matmul_t(h, vars[self.u.index()])?;
        let z = tape.add(zx, zh)?;
        let z = tape.add_row(z, vars[self.b.index()])?;
        let gates = tape.slice_cols(z, 0, 3 * hd)?;
        let gates = tape.sigmoid(gates)?;
        let f = tape.slice_cols(gates, 0, hd)?;
        let i = tape.slice_cols(gates, hd, hd)?;
        let o = tape.slice_cols(gates, 2 * hd, hd)?;
        let cand = tape.slice_cols(z, 3 * hd, hd)?;
        let act = |tape: &mut Tape, v: Var| match cell {
            CellActivation::Sigmoid => tape.sigmoid(v),
            CellActivation::Tanh => tape.tanh(v),
        };
        let cand = act(tape, cand)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, cand)?;
        let c_new = tape.add(keep, write)?;
        let out = act(tape, c_new)?;
        let h_new = tape.mul(o, out)?;
        Ok((h_new, c_new))
    }
}
