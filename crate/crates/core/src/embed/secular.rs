//! Maximizers of a diagonal quadratic over the unit sphere.
//!
//! Both solvers maximize `Σ h_i β_i² + 2 gᵀβ` subject to `‖β‖ = 1`; the
//! restricted one adds `wᵀβ = 0`. Stationary points have the form
//! `β = (η − h)⁻¹ (g − ν w)` and the global maximum is the one whose shift `η`
//! lies above the largest eigenvalue of the (restricted) form. That shift is
//! found by safeguarded Newton on `1/‖β(η)‖ − 1`, which is concave in `η`.

const REL_TOL: f64 = 1e-13;
const MAX_ITERS: usize = 300;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(r: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; r];
    e[k] = 1.0;
    e
}

fn spectral_scale(h: &[f64]) -> f64 {
    h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
}

/// Finds `δ ∈ (0, upper]` with `‖β(δ)‖ = 1`. `eval` returns `β(δ)` and
/// `βᵀ M⁻¹ β`, the negated half-derivative of `‖β‖²`.
fn unit_norm_root(upper: f64, mut eval: impl FnMut(f64) -> (Vec<f64>, f64)) -> Option<Vec<f64>> {
    let (mut lo, mut hi) = (0.0f64, upper);
    let mut delta = upper;
    let mut beta = Vec::new();
    for _ in 0..MAX_ITERS {
        let (b, slope) = eval(delta);
        let nb = norm(&b);
        if !nb.is_finite() || nb == 0.0 {
            return None;
        }
        beta = b;
        let phi = 1.0 / nb - 1.0;
        if phi.abs() <= 4.0 * f64::EPSILON {
            break;
        }
        if phi < 0.0 {
            lo = delta;
        } else {
            hi = delta;
        }
        let mut next = delta - phi * nb.powi(3) / slope;
        if !(next > lo && next < hi) {
            next = if lo > 0.0 { 0.5 * (lo + hi) } else { 0.01 * hi };
        }
        if (next - delta).abs() <= f64::EPSILON * delta || hi - lo <= f64::EPSILON * hi {
            break;
        }
        delta = next;
    }
    let nb = norm(&beta);
    if !nb.is_finite() || nb == 0.0 {
        return None;
    }
    Some(beta.iter().map(|v| v / nb).collect())
}

/// Unconstrained sphere problem. `h` must be sorted descending. `orient`
/// returns ±1 for a direction whose sign is otherwise arbitrary.
pub(crate) fn sphere_max(h: &[f64], g: &[f64], orient: &dyn Fn(&[f64]) -> f64) -> Option<Vec<f64>> {
    let r = h.len();
    let gnorm = norm(g);
    if gnorm == 0.0 {
        let e = unit(r, 0);
        let s = orient(&e);
        return Some(e.iter().map(|v| v * s).collect());
    }
    let tol = REL_TOL * spectral_scale(h);
    let gaps: Vec<f64> = h.iter().map(|v| h[0] - v).collect();
    let in_top = |i: usize| gaps[i] <= tol;

    let top_g2: f64 = (0..r).filter(|&i| in_top(i)).map(|i| g[i] * g[i]).sum();
    if top_g2 <= (REL_TOL * gnorm).powi(2) {
        let mut beta: Vec<f64> = (0..r)
            .map(|i| if in_top(i) { 0.0 } else { g[i] / gaps[i] })
            .collect();
        let base = norm(&beta);
        if base <= 1.0 {
            beta[0] = orient(&unit(r, 0)) * (1.0 - base * base).max(0.0).sqrt();
            return Some(beta);
        }
    }

    unit_norm_root(gnorm, |delta| {
        let mut slope = 0.0;
        let beta: Vec<f64> = (0..r)
            .map(|i| {
                let d = delta + gaps[i];
                let b = g[i] / d;
                slope += b * b / d;
                b
            })
            .collect();
        (beta, slope)
    })
}

/// The largest eigenvalue of `diag(h)` restricted to `w⊥`, and where it comes from.
#[derive(Debug, Clone, Copy)]
enum TopRestricted {
    /// Root of the secular equation `Σ w_j² / (h_j − x) = 0`.
    Coupled(f64),
    /// Repeated `h` among coupled indices.
    Degenerate,
    /// An index with no weight in `w`.
    Decoupled(usize),
}

struct Restricted<'a> {
    h: &'a [f64],
    w: &'a [f64],
    coupled: Vec<usize>,
    decoupled: Vec<usize>,
    /// Coupled indices sharing the largest coupled `h`.
    top_group: Vec<usize>,
    x_max: f64,
    kind: TopRestricted,
}

impl<'a> Restricted<'a> {
    fn new(h: &'a [f64], w: &'a [f64]) -> Option<Self> {
        let r = h.len();
        let tol = REL_TOL * spectral_scale(h);
        let by_value = |a: &usize, b: &usize| h[*b].total_cmp(&h[*a]).then(a.cmp(b));
        let (mut coupled, mut decoupled): (Vec<usize>, Vec<usize>) =
            (0..r).partition(|&i| w[i].abs() > REL_TOL);
        coupled.sort_by(by_value);
        decoupled.sort_by(by_value);

        let mut best: Option<(f64, TopRestricted)> = None;
        let mut consider = |x: f64, kind: TopRestricted| {
            if best.is_none_or(|(bx, _)| x > bx) {
                best = Some((x, kind));
            }
        };
        let top_group: Vec<usize> = match coupled.first() {
            Some(&j1) => coupled
                .iter()
                .copied()
                .take_while(|&j| h[j1] - h[j] <= tol)
                .collect(),
            None => Vec::new(),
        };
        if top_group.len() >= 2 {
            consider(h[top_group[0]], TopRestricted::Degenerate);
        } else if let (Some(&j1), Some(&j2)) = (top_group.first(), coupled.get(1)) {
            let others: Vec<usize> = coupled[1..].to_vec();
            let secular = |x: f64| {
                let tail: f64 = others.iter().map(|&j| w[j] * w[j] / (h[j] - x)).sum();
                w[j1] * w[j1] + (h[j1] - x) * tail
            };
            let (mut lo, mut hi) = (h[j2], h[j1]);
            for _ in 0..MAX_ITERS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if secular(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            consider(0.5 * (lo + hi), TopRestricted::Coupled(0.5 * (lo + hi)));
        }
        if let Some(&k) = decoupled.first() {
            consider(h[k], TopRestricted::Decoupled(k));
        }
        let (x_max, kind) = best?;
        Some(Restricted {
            h,
            w,
            coupled,
            decoupled,
            top_group,
            x_max,
            kind,
        })
    }

    /// Unit eigenvector for `x_max`.
    fn top_vector(&self) -> Vec<f64> {
        let r = self.h.len();
        let mut y = vec![0.0; r];
        match self.kind {
            TopRestricted::Coupled(x) => {
                for &j in &self.coupled {
                    y[j] = self.w[j] / (self.h[j] - x);
                }
            }
            TopRestricted::Degenerate => {
                let mut group = self.top_group.clone();
                group.sort_by(|&a, &b| self.w[b].abs().total_cmp(&self.w[a].abs()).then(a.cmp(&b)));
                let (a, b) = (group[0], group[1]);
                y[a] = self.w[b];
                y[b] = -self.w[a];
            }
            TopRestricted::Decoupled(k) => y[k] = 1.0,
        }
        let ny = norm(&y);
        y.iter_mut().for_each(|v| *v /= ny);
        y
    }

    /// Solves `P (η − diag h) P x = rhs` on `w⊥` for `rhs ⊥ w` and `η > x_max`.
    fn apply(&self, eta: f64, rhs: &[f64]) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let mut x = vec![0.0; h.len()];
        for &i in &self.decoupled {
            x[i] = rhs[i] / (eta - h[i]);
        }
        if self.coupled.is_empty() {
            return x;
        }
        if self.top_group.len() == 1 {
            // keep η − h_{j1}, which may vanish, out of every denominator
            let j1 = self.top_group[0];
            let d1 = eta - h[j1];
            let (mut a, mut b) = (0.0, 0.0);
            for &j in &self.coupled[1..] {
                let d = eta - h[j];
                a += w[j] * w[j] / d;
                b += w[j] * rhs[j] / d;
            }
            let den = a * d1 + w[j1] * w[j1];
            let nu = (b * d1 + w[j1] * rhs[j1]) / den;
            x[j1] = (rhs[j1] * a - w[j1] * b) / den;
            for &j in &self.coupled[1..] {
                x[j] = (rhs[j] - nu * w[j]) / (eta - h[j]);
            }
        } else {
            let (mut s, mut t) = (0.0, 0.0);
            for &j in &self.coupled {
                let d = eta - h[j];
                s += w[j] * w[j] / d;
                t += w[j] * rhs[j] / d;
            }
            let nu = t / s;
            for &j in &self.coupled {
                x[j] = (rhs[j] - nu * w[j]) / (eta - h[j]);
            }
        }
        x
    }
}

/// Sphere problem restricted to the complement of the unit vector `w`.
pub(crate) fn restricted_sphere_max(
    h: &[f64],
    g: &[f64],
    w: &[f64],
    orient: &dyn Fn(&[f64]) -> f64,
) -> Option<Vec<f64>> {
    let wg = dot(w, g);
    let gp: Vec<f64> = g.iter().zip(w).map(|(gi, wi)| gi - wg * wi).collect();
    let problem = Restricted::new(h, w)?;
    let y = problem.top_vector();
    let gnorm = norm(&gp);
    let oriented = |v: &[f64]| {
        let s = orient(v);
        v.iter().map(|x| x * s).collect::<Vec<f64>>()
    };
    if gnorm == 0.0 {
        return Some(oriented(&y));
    }

    if dot(&y, &gp).abs() <= REL_TOL * gnorm {
        let eta = problem.x_max + REL_TOL * spectral_scale(h);
        let mut rest = problem.apply(eta, &gp);
        let along = dot(&y, &rest);
        rest.iter_mut().zip(&y).for_each(|(r, yi)| *r -= along * yi);
        let base = norm(&rest);
        if base <= 1.0 {
            let t = (1.0 - base * base).max(0.0).sqrt();
            let y = oriented(&y);
            return Some(rest.iter().zip(&y).map(|(r, yi)| r + t * yi).collect());
        }
    }

    unit_norm_root(gnorm, |delta| {
        let eta = problem.x_max + delta;
        let beta = problem.apply(eta, &gp);
        let gamma = problem.apply(eta, &beta);
        let slope = dot(&beta, &gamma);
        (beta, slope)
    })
}
