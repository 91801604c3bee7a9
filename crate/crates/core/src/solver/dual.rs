use crate::cssp::{CsspModel, DeterministicPolicy, PolicyValue};

use super::weighted::{solve_weighted_ssp, Heuristic, WeightedSolution};
use super::SolveError;

#[derive(Debug, Clone)]
pub struct DualConfig {
    /// Largest multiplier tried when growing the bracket.
    pub lambda_cap: f64,
    /// Iteration budget of projected supergradient ascent (two or more
    /// active constraints).
    pub supergradient_iterations: usize,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            lambda_cap: 1e6,
            supergradient_iterations: 500,
        }
    }
}

/// Result of maximizing the Lagrangian dual `L(lambda)`.
#[derive(Debug, Clone)]
pub struct DualState {
    pub lambda_star: Vec<f64>,
    pub dual_value: f64,
    /// Policy attaining the inner minimum at `lambda_star`.
    pub best_dual_policy: DeterministicPolicy,
    pub best_dual_eval: PolicyValue,
    /// Cheapest feasible policy met while probing multipliers.
    pub best_feasible: Option<(DeterministicPolicy, PolicyValue)>,
    /// Number of weighted SSP solves performed.
    pub probes: usize,
}

struct Prober<'a> {
    model: &'a CsspModel,
    heuristic: &'a dyn Heuristic,
    probes: usize,
    best_feasible: Option<(DeterministicPolicy, PolicyValue)>,
}

impl Prober<'_> {
    fn solve(&mut self, lambda: &[f64]) -> Result<WeightedSolution, SolveError> {
        self.probes += 1;
        let sol = solve_weighted_ssp(self.model, lambda, self.heuristic)?;
        if sol.eval.is_feasible()
            && self
                .best_feasible
                .as_ref()
                .is_none_or(|(_, v)| sol.eval.f < v.f)
        {
            self.best_feasible = Some((sol.policy.clone(), sol.eval.clone()));
        }
        Ok(sol)
    }
}

/// Maximizes the concave piecewise-linear dual function. A single active
/// constraint is handled by growing a bracket on the sign of the
/// supergradient and then cutting it at crossings of policy lines, several
/// by projected supergradient ascent. Constraints with an infinite
/// bound keep a zero multiplier.
pub fn dual_ascent(
    model: &CsspModel,
    config: &DualConfig,
    heuristic: &dyn Heuristic,
) -> Result<DualState, SolveError> {
    let dims = model.num_secondary();
    let active: Vec<usize> = (0..dims)
        .filter(|&i| model.bounds()[i].is_finite())
        .collect();
    let mut prober = Prober {
        model,
        heuristic,
        probes: 0,
        best_feasible: None,
    };
    let zero = vec![0.0; dims];
    let at_zero = match prober.solve(&zero) {
        Ok(s) => s,
        Err(SolveError::NoProperPolicy(s)) => return Err(SolveError::InfeasibleRelaxation(s)),
        Err(e) => return Err(e),
    };

    let (lambda, sol) = match active.len() {
        0 => (zero, at_zero),
        1 => bisect(&mut prober, config, active[0], at_zero)?,
        _ => supergradient(&mut prober, config, &active, at_zero)?,
    };
    Ok(DualState {
        dual_value: sol.value,
        lambda_star: lambda,
        best_dual_policy: sol.policy,
        best_dual_eval: sol.eval,
        best_feasible: prober.best_feasible,
        probes: prober.probes,
    })
}

const FLAT_TOLERANCE: f64 = 1e-12;
const LINE_TOLERANCE: f64 = 1e-9;
const MAX_CUTS: usize = 200;

fn bisect(
    prober: &mut Prober<'_>,
    config: &DualConfig,
    index: usize,
    at_zero: WeightedSolution,
) -> Result<(Vec<f64>, WeightedSolution), SolveError> {
    let dims = prober.model.num_secondary();
    let with = |x: f64| {
        let mut l = vec![0.0; dims];
        l[index] = x;
        l
    };
    let gsign = |s: &WeightedSolution| s.eval.g[index];
    if gsign(&at_zero) <= 0.0 {
        return Ok((with(0.0), at_zero));
    }

    let mut lo = 0.0;
    let mut lo_sol = at_zero;
    let mut hi = 1.0;
    let mut hi_sol;
    loop {
        let s = prober.solve(&with(hi))?;
        if gsign(&s) <= 0.0 {
            hi_sol = s;
            break;
        }
        lo = hi;
        lo_sol = s;
        if hi >= config.lambda_cap {
            // Every probed policy violates the bound: the dual keeps growing.
            return Ok((with(lo), lo_sol));
        }
        hi = (hi * 2.0).min(config.lambda_cap);
    }

    // Each probe at the intersection of the two bracketing policy lines
    // either attains the envelope there, which makes it the maximizer, or
    // reveals a new policy line that narrows the bracket.
    let line = |s: &WeightedSolution, x: f64| s.eval.f + x * gsign(s);
    let tol = |v: f64| LINE_TOLERANCE * (1.0 + v.abs());
    let mut flat: Option<WeightedSolution> = None;
    let mut star = None;
    if gsign(&hi_sol).abs() <= FLAT_TOLERANCE {
        flat = Some(hi_sol.clone());
    } else {
        for _ in 0..MAX_CUTS {
            let x = crossing(&lo_sol, &hi_sol, gsign).filter(|x| *x > lo && *x < hi);
            let Some(x) = x else { break };
            let s = prober.solve(&with(x))?;
            let envelope = line(&lo_sol, x).min(line(&hi_sol, x));
            if s.value >= envelope - tol(envelope) {
                star = Some(x);
                break;
            }
            let g = gsign(&s);
            if g.abs() <= FLAT_TOLERANCE {
                flat = Some(s);
                break;
            } else if g > 0.0 {
                lo = x;
                lo_sol = s;
            } else {
                hi = x;
                hi_sol = s;
            }
        }
    }

    let star = match (flat, star) {
        (Some(level), _) => {
            // The dual is constant around this policy; take the midpoint of
            // the interval where it is maximal.
            let f0 = level.eval.f;
            let mut left = lo;
            for _ in 0..MAX_CUTS {
                let Some(a) = crossing(&lo_sol, &level, gsign) else {
                    break;
                };
                let s = prober.solve(&with(a))?;
                left = a;
                if s.value >= f0 - tol(f0) || gsign(&s) <= FLAT_TOLERANCE {
                    break;
                }
                lo_sol = s;
            }
            let mut right = hi;
            if gsign(&hi_sol) < -FLAT_TOLERANCE {
                for _ in 0..MAX_CUTS {
                    let Some(b) = crossing(&level, &hi_sol, gsign) else {
                        break;
                    };
                    let s = prober.solve(&with(b))?;
                    right = b;
                    if s.value >= f0 - tol(f0) || gsign(&s) >= -FLAT_TOLERANCE {
                        break;
                    }
                    hi_sol = s;
                }
            }
            0.5 * (left + right)
        }
        (None, Some(x)) => x,
        (None, None) => crossing(&lo_sol, &hi_sol, gsign)
            .filter(|x| *x >= lo && *x <= hi)
            .unwrap_or(0.5 * (lo + hi)),
    };
    let sol = prober.solve(&with(star))?;
    Ok((with(star), sol))
}

/// Multiplier where the Lagrangian lines of two policies cross.
fn crossing(
    a: &WeightedSolution,
    b: &WeightedSolution,
    gsign: impl Fn(&WeightedSolution) -> f64,
) -> Option<f64> {
    let x = (b.eval.f - a.eval.f) / (gsign(a) - gsign(b));
    x.is_finite().then_some(x.max(0.0))
}

fn supergradient(
    prober: &mut Prober<'_>,
    config: &DualConfig,
    active: &[usize],
    at_zero: WeightedSolution,
) -> Result<(Vec<f64>, WeightedSolution), SolveError> {
    let dims = prober.model.num_secondary();
    let norm = |s: &WeightedSolution| {
        active
            .iter()
            .map(|&i| s.eval.g[i].powi(2))
            .sum::<f64>()
            .sqrt()
    };
    // Step scale: primal cost per unit of constraint violation at lambda = 0.
    let scale = {
        let n = norm(&at_zero);
        if n > 0.0 {
            (at_zero.eval.f.abs().max(1.0)) / n
        } else {
            1.0
        }
    };
    let mut lambda = vec![0.0; dims];
    let mut best = (lambda.clone(), at_zero.clone());
    let mut current = at_zero;
    for k in 1..=config.supergradient_iterations {
        let gnorm = norm(&current);
        let slack = active
            .iter()
            .map(|&i| lambda[i] * current.eval.g[i])
            .sum::<f64>()
            .abs();
        if current.eval.is_feasible() && slack <= FLAT_TOLERANCE * (1.0 + current.value.abs()) {
            break;
        }
        if gnorm == 0.0 {
            break;
        }
        let step = scale / (k as f64).sqrt() / gnorm;
        for &i in active {
            lambda[i] = (lambda[i] + step * current.eval.g[i]).clamp(0.0, config.lambda_cap);
        }
        current = prober.solve(&lambda)?;
        if current.value > best.1.value {
            best = (lambda.clone(), current.clone());
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ZeroHeuristic;
    use crate::testing::{ch1, ch1_with_bound};

    #[test]
    fn ch1_dual() {
        let d = dual_ascent(&ch1(), &DualConfig::default(), &ZeroHeuristic).unwrap();
        assert!((d.lambda_star[0] - 1.0).abs() < 1e-9, "{:?}", d.lambda_star);
        assert!((d.dual_value - 6.0).abs() < 1e-9);
        let (p, v) = d.best_feasible.unwrap();
        assert_eq!(p.get(0), Some(1));
        assert_eq!(v.f, 10.0);
    }

    #[test]
    fn ch1_loose_bound_has_zero_multiplier() {
        let d = dual_ascent(
            &ch1_with_bound(10.0),
            &DualConfig::default(),
            &ZeroHeuristic,
        )
        .unwrap();
        assert_eq!(d.lambda_star, vec![0.0]);
        assert_eq!(d.dual_value, 1.0);
        assert_eq!(d.best_dual_policy.get(0), Some(0));
    }

    #[test]
    fn no_secondary_costs() {
        use crate::cssp::{CsspBuilder, Outcome};
        let mut b = CsspBuilder::new(0);
        let s = b.state("s");
        let g = b.goal("g");
        b.initial(s, 1.0);
        b.action(s, "x", vec![Outcome::new(g, 1.0, vec![4.0])]);
        b.action(s, "y", vec![Outcome::new(g, 1.0, vec![3.0])]);
        let d = dual_ascent(&b.build(), &DualConfig::default(), &ZeroHeuristic).unwrap();
        assert!(d.lambda_star.is_empty());
        assert_eq!(d.dual_value, 3.0);
    }

    #[test]
    fn flat_segment_takes_midpoint() {
        use crate::cssp::{CsspBuilder, Outcome};
        // lines: 0 + 2(l) [g=2], 4 + 0(l) [g=0], 10 - 2(l) [g=-2]
        // dual max is flat at 4 over [2, 3]
        let mut b = CsspBuilder::new(1);
        let s = b.state("s");
        let g = b.goal("g");
        b.initial(s, 1.0);
        b.action(s, "a", vec![Outcome::new(g, 1.0, vec![0.0001, 4.0])]);
        b.action(s, "b", vec![Outcome::new(g, 1.0, vec![4.0001, 2.0])]);
        b.action(s, "c", vec![Outcome::new(g, 1.0, vec![10.0001, 0.0])]);
        b.bounds(vec![2.0]);
        let d = dual_ascent(&b.build(), &DualConfig::default(), &ZeroHeuristic).unwrap();
        assert!((d.lambda_star[0] - 2.5).abs() < 1e-6, "{:?}", d.lambda_star);
        assert!((d.dual_value - 4.0001).abs() < 1e-9);
        assert_eq!(d.best_dual_policy.get(0), Some(1));
    }
}
