//! Linear support vector machines with a bias term.
//!
//! Two losses share one dual solver:
//!
//! * regression: `min ½‖w‖² + C Σ (ξᵢ + ξᵢ*)` subject to
//!   `yᵢ − ⟨w,xᵢ⟩ − b ≤ ε + ξᵢ`, `⟨w,xᵢ⟩ + b − yᵢ ≤ ε + ξᵢ*`, `ξ, ξ* ≥ 0`;
//! * classification: the hinge-loss soft margin, `min ½‖w‖² + C Σ ξᵢ` with
//!   `yᵢ(⟨w,xᵢ⟩ + b) ≥ 1 − ξᵢ`.
//!
//! Both duals have the form `min ½ aᵀQa + pᵀa` subject to `sᵀa = 0` and
//! `0 ≤ a ≤ C`, with `s ∈ {±1}` per variable. The solver sweeps the variables in
//! a seeded random order and updates each against its maximally violating
//! partner, so every step keeps the equality constraint and the box. It stops
//! once the largest KKT violation drops below `tol`.

use std::fmt;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ingest::{format_vector, parse_vector};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Regression,
    Classification,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Regression => "regression",
            Mode::Classification => "classification",
        })
    }
}

/// `f(x) = ⟨w, x⟩ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    /// Tube half-width; unused in classification mode.
    pub epsilon: f64,
    pub c_reg: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub epsilon: f64,
    pub c_reg: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            epsilon: 0.1,
            c_reg: 1.0,
            tol: 1e-6,
            max_passes: 10_000,
            seed: 0,
        }
    }
}

impl SvmParams {
    pub fn with_seed(self, seed: u64) -> Self {
        SvmParams { seed, ..self }
    }
}

/// A trained model together with its dual solution.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: SvmModel,
    /// Multipliers of the `y − f ≤ ε + ξ` constraints (regression) or of the
    /// margin constraints (classification).
    pub alpha: Vec<f64>,
    /// Multipliers of the `f − y ≤ ε + ξ*` constraints; empty for classification.
    pub alpha_star: Vec<f64>,
    /// Largest KKT violation at exit.
    pub violation: f64,
    pub passes: usize,
    pub converged: bool,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::LengthMismatch {
                expected: self.w.len(),
                found: x.len(),
            });
        }
        Ok(dot(&self.w, x) + self.b)
    }

    /// Loss of one sample under this model's mode.
    pub fn loss(&self, x: &[f64], y: f64) -> Result<f64> {
        let f = self.predict(x)?;
        Ok(match self.mode {
            Mode::Regression => ((y - f).abs() - self.epsilon).max(0.0),
            Mode::Classification => (1.0 - y * f).max(0.0),
        })
    }

    /// `½‖w‖² + C Σ loss`.
    pub fn primal_objective(&self, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
        let mut slack = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            slack += self.loss(x, y)?;
        }
        Ok(0.5 * dot(&self.w, &self.w) + self.c_reg * slack)
    }

    /// `SVM v1 <mode> <dim> <epsilon> <c_reg>`, then `w` on one line, then `b`.
    pub fn to_text(&self) -> String {
        format!(
            "SVM v1 {} {} {:?} {:?}\n{}\n{:?}\n",
            self.mode,
            self.dim(),
            self.epsilon,
            self.c_reg,
            format_vector(&self.w),
            self.b
        )
    }

    pub(crate) fn parse_lines<'a, I>(lines: &mut I, first_line: usize, what: &'static str) -> Result<SvmModel>
    where
        I: Iterator<Item = &'a str>,
    {
        let bad = |line: usize, msg: String| Error::Parse { what, line, msg };
        let header = lines.next().ok_or_else(|| bad(first_line, "missing SVM header".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "SVM" || parts[1] != "v1" {
            return Err(bad(first_line, format!("bad SVM header {header:?}")));
        }
        let mode = match parts[2] {
            "regression" => Mode::Regression,
            "classification" => Mode::Classification,
            other => return Err(bad(first_line, format!("bad SVM mode {other:?}"))),
        };
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(first_line, format!("bad number {s:?}")))
        };
        let dim: usize = parts[3].parse().map_err(|_| bad(first_line, "bad dim".into()))?;
        let epsilon = num(parts[4])?;
        let c_reg = num(parts[5])?;
        let w_line = lines.next().ok_or_else(|| bad(first_line + 1, "missing weight line".into()))?;
        let w = if dim == 0 && w_line.trim().is_empty() {
            Vec::new()
        } else {
            parse_vector(w_line).map_err(|e| bad(first_line + 1, e))?
        };
        if w.len() != dim {
            return Err(bad(first_line + 1, format!("expected {dim} weights, found {}", w.len())));
        }
        let b_line = lines.next().ok_or_else(|| bad(first_line + 2, "missing bias line".into()))?;
        let b = b_line
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(first_line + 2, format!("bad bias {b_line:?}")))?;
        Ok(SvmModel {
            w,
            b,
            epsilon,
            c_reg,
            mode,
        })
    }

    pub fn from_text(text: &str) -> Result<SvmModel> {
        SvmModel::parse_lines(&mut text.lines(), 1, "model")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate(xs: &[Vec<f64>], ys: &[f64], params: &SvmParams) -> Result<usize> {
    if xs.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    let dim = xs[0].len();
    if let Some(x) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    if xs.iter().flatten().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data".into()));
    }
    if !(params.c_reg > 0.0) || !params.c_reg.is_finite() {
        return Err(Error::invalid(format!("c_reg must be positive, got {}", params.c_reg)));
    }
    if !(params.tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {}", params.tol)));
    }
    Ok(dim)
}

/// `min ½ aᵀQa + pᵀa` s.t. `Σ sign·a = 0`, `0 ≤ a ≤ C`, where
/// `Q[t][u] = sign[t]·sign[u]·K(sample[t], sample[u])`.
struct Dual<'a> {
    gram: &'a [f64],
    n: usize,
    sign: Vec<f64>,
    p: Vec<f64>,
    c: f64,
}

struct DualSolution {
    a: Vec<f64>,
    rho: f64,
    violation: f64,
    passes: usize,
    converged: bool,
}

impl Dual<'_> {
    fn vars(&self) -> usize {
        self.sign.len()
    }

    fn k(&self, t: usize, u: usize) -> f64 {
        self.gram[(t % self.n) * self.n + u % self.n]
    }

    fn in_up(&self, t: usize, a: &[f64]) -> bool {
        if self.sign[t] > 0.0 {
            a[t] < self.c
        } else {
            a[t] > 0.0
        }
    }

    fn in_low(&self, t: usize, a: &[f64]) -> bool {
        if self.sign[t] > 0.0 {
            a[t] > 0.0
        } else {
            a[t] < self.c
        }
    }

    /// `(m, argmax over I_up, M, argmin over I_low)` of `−s·G`.
    fn extremes(&self, a: &[f64], g: &[f64]) -> (f64, usize, f64, usize) {
        let mut m = (f64::NEG_INFINITY, usize::MAX);
        let mut big_m = (f64::INFINITY, usize::MAX);
        for t in 0..self.vars() {
            let v = -self.sign[t] * g[t];
            if self.in_up(t, a) && v > m.0 {
                m = (v, t);
            }
            if self.in_low(t, a) && v < big_m.0 {
                big_m = (v, t);
            }
        }
        (m.0, m.1, big_m.0, big_m.1)
    }

    /// Moves `a[i]` by `+s_i·t` and `a[j]` by `−s_j·t` with the exact optimal `t`.
    fn step(&self, i: usize, j: usize, a: &mut [f64], g: &mut [f64]) -> bool {
        let viol = -self.sign[i] * g[i] + self.sign[j] * g[j];
        if viol <= 0.0 {
            return false;
        }
        let mut eta = self.k(i, i) + self.k(j, j) - 2.0 * self.k(i, j);
        if eta <= 1e-12 {
            eta = 1e-12;
        }
        let room_i = if self.sign[i] > 0.0 { self.c - a[i] } else { a[i] };
        let room_j = if self.sign[j] > 0.0 { a[j] } else { self.c - a[j] };
        let t = (viol / eta).min(room_i).min(room_j);
        if !(t > 0.0) {
            return false;
        }

        let old_i = a[i];
        let old_j = a[j];
        let mut new_i = old_i + self.sign[i] * t;
        let mut new_j = old_j - self.sign[j] * t;
        if t == room_i {
            new_i = if self.sign[i] > 0.0 { self.c } else { 0.0 };
        }
        if t == room_j {
            new_j = if self.sign[j] > 0.0 { 0.0 } else { self.c };
        }
        a[i] = new_i.clamp(0.0, self.c);
        a[j] = new_j.clamp(0.0, self.c);
        debug_assert!((0.0..=self.c).contains(&a[i]) && (0.0..=self.c).contains(&a[j]));

        let di = (a[i] - old_i) * self.sign[i];
        let dj = (a[j] - old_j) * self.sign[j];
        for u in 0..self.vars() {
            g[u] += self.sign[u] * (self.k(u, i) * di + self.k(u, j) * dj);
        }
        true
    }

    fn solve(&self, tol: f64, max_passes: usize, seed: u64) -> DualSolution {
        let vars = self.vars();
        let mut a = vec![0.0; vars];
        let mut g = self.p.clone();
        let mut rng = seed::rng(seed);
        let mut order: Vec<usize> = (0..vars).collect();
        let mut passes = 0;
        let mut converged = false;

        let violation = loop {
            let (m, _, big_m, _) = self.extremes(&a, &g);
            let gap = m - big_m;
            if gap < tol {
                converged = true;
                break gap.max(0.0);
            }
            if passes >= max_passes {
                break gap;
            }
            order.shuffle(&mut rng);
            for &t in &order {
                let (m, up, big_m, low) = self.extremes(&a, &g);
                if m - big_m < tol {
                    break;
                }
                let v = -self.sign[t] * g[t];
                // Pair t with whichever side gives it the larger violation.
                let up_gain = if self.in_up(t, &a) { v - big_m } else { f64::NEG_INFINITY };
                let low_gain = if self.in_low(t, &a) { m - v } else { f64::NEG_INFINITY };
                let (i, j) = if up_gain >= low_gain { (t, low) } else { (up, t) };
                if i != j && up_gain.max(low_gain) > 0.5 * tol {
                    self.step(i, j, &mut a, &mut g);
                }
            }
            passes += 1;
        };

        DualSolution {
            rho: self.rho(&a, &g),
            a,
            violation,
            passes,
            converged,
        }
    }

    /// Offset from free variables, or the midpoint of the feasible interval.
    fn rho(&self, a: &[f64], g: &[f64]) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in 0..self.vars() {
            let yg = self.sign[t] * g[t];
            let positive = self.sign[t] > 0.0;
            if a[t] >= self.c {
                if positive {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            } else if a[t] <= 0.0 {
                if positive {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        if free > 0 {
            free_sum / free as f64
        } else {
            match (lb.is_finite(), ub.is_finite()) {
                (true, true) => 0.5 * (lb + ub),
                (true, false) => lb,
                (false, true) => ub,
                (false, false) => 0.0,
            }
        }
    }
}

fn gram(xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = dot(&xs[i], &xs[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

fn weights(xs: &[Vec<f64>], dim: usize, coef: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    for (x, c) in xs.iter().zip(coef) {
        if c != 0.0 {
            for (wk, xk) in w.iter_mut().zip(x) {
                *wk += c * xk;
            }
        }
    }
    w
}

/// ε-insensitive support vector regression.
pub fn train_svr(xs: &[Vec<f64>], ys: &[f64], params: &SvmParams) -> Result<SvmFit> {
    let dim = validate(xs, ys, params)?;
    if !(params.epsilon >= 0.0) || !params.epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be non-negative, got {}", params.epsilon)));
    }
    let n = xs.len();
    let k = gram(xs);
    let dual = Dual {
        gram: &k,
        n,
        sign: (0..2 * n).map(|t| if t < n { 1.0 } else { -1.0 }).collect(),
        p: (0..2 * n)
            .map(|t| {
                if t < n {
                    params.epsilon - ys[t]
                } else {
                    params.epsilon + ys[t - n]
                }
            })
            .collect(),
        c: params.c_reg,
    };
    let sol = dual.solve(params.tol, params.max_passes, params.seed);
    let alpha = sol.a[..n].to_vec();
    let alpha_star = sol.a[n..].to_vec();
    let w = weights(xs, dim, alpha.iter().zip(&alpha_star).map(|(a, s)| a - s));
    let model = SvmModel {
        w,
        b: -sol.rho,
        epsilon: params.epsilon,
        c_reg: params.c_reg,
        mode: Mode::Regression,
    };
    check_finite(&model)?;
    Ok(SvmFit {
        model,
        alpha,
        alpha_star,
        violation: sol.violation,
        passes: sol.passes,
        converged: sol.converged,
    })
}

/// Soft-margin hinge-loss classifier; labels must be `+1` or `−1`, both present.
pub fn train_classifier(xs: &[Vec<f64>], ys: &[f64], params: &SvmParams) -> Result<SvmFit> {
    let dim = validate(xs, ys, params)?;
    if let Some(y) = ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid(format!("classification labels must be +1 or -1, got {y}")));
    }
    if !(ys.contains(&1.0) && ys.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    let n = xs.len();
    let k = gram(xs);
    let dual = Dual {
        gram: &k,
        n,
        sign: ys.to_vec(),
        p: vec![-1.0; n],
        c: params.c_reg,
    };
    let sol = dual.solve(params.tol, params.max_passes, params.seed);
    let w = weights(xs, dim, sol.a.iter().zip(ys).map(|(a, y)| a * y));
    let model = SvmModel {
        w,
        b: -sol.rho,
        epsilon: params.epsilon,
        c_reg: params.c_reg,
        mode: Mode::Classification,
    };
    check_finite(&model)?;
    Ok(SvmFit {
        model,
        alpha: sol.a,
        alpha_star: Vec::new(),
        violation: sol.violation,
        passes: sol.passes,
        converged: sol.converged,
    })
}

fn check_finite(model: &SvmModel) -> Result<()> {
    if model.w.iter().chain([&model.b]).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("trained SVM".into()))
    }
}

/// One-vs-rest bundle of binary classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct OneVsRest {
    /// Sorted, unique.
    pub classes: Vec<String>,
    /// `models[i]` separates `classes[i]` from the rest.
    pub models: Vec<SvmModel>,
}

impl OneVsRest {
    pub fn dim(&self) -> usize {
        self.models.first().map_or(0, SvmModel::dim)
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.predict(x)).collect()
    }

    /// Class with the highest raw score; ties go to the lexicographically smallest label.
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let scores = self.scores(x)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(&self.classes[best])
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }
}

/// Trains one `class vs rest` classifier per distinct label.
pub fn train_multiclass(xs: &[Vec<f64>], labels: &[String], params: &SvmParams) -> Result<OneVsRest> {
    if xs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            found: labels.len(),
        });
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid(format!(
            "multiclass training needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let mut models = Vec::with_capacity(classes.len());
    for (i, class) in classes.iter().enumerate() {
        let ys: Vec<f64> = labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
        let p = params.with_seed(seed::derive_indexed(params.seed, "one-vs-rest", i));
        models.push(train_classifier(xs, &ys, &p)?.model);
    }
    Ok(OneVsRest { classes, models })
}
