use std::io::{self, Write};

use crate::cssp::{CsspModel, DeterministicPolicy, PolicyValue};

use super::dual::{dual_ascent, DualConfig, DualState};
use super::enumerate::PolicyEnumerator;
use super::weighted::{solve_weighted_ssp, Heuristic};
use super::SolveError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub lb: f64,
    pub ub: f64,
    pub feasible_found: bool,
}

#[derive(Debug, Clone)]
pub struct AnytimeResult {
    pub incumbent: Option<(DeterministicPolicy, PolicyValue)>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Stage-2 expansions performed.
    pub iterations_used: usize,
    pub trace: Vec<TraceRecord>,
    /// `None` when no proper policy exists at all.
    pub dual: Option<DualState>,
    /// True when the bounds are certified tight: either they met or the
    /// policy space ran out.
    pub exhausted: bool,
}

impl AnytimeResult {
    pub fn is_certified_infeasible(&self) -> bool {
        self.upper_bound == f64::INFINITY && self.lower_bound == f64::INFINITY
    }

    pub fn gap(&self) -> f64 {
        self.upper_bound - self.lower_bound
    }
}

/// Runs both stages and reports whatever bounds were reached. `l` caps the
/// number of stage-2 expansions; `None` runs until the bounds meet.
pub fn anytime_run(
    model: &CsspModel,
    l: Option<usize>,
    heuristic: &dyn Heuristic,
) -> Result<AnytimeResult, SolveError> {
    let dual = match dual_ascent(model, &DualConfig::default(), heuristic) {
        Ok(d) => d,
        Err(SolveError::InfeasibleRelaxation(_)) => {
            return Ok(AnytimeResult {
                incumbent: None,
                lower_bound: f64::INFINITY,
                upper_bound: f64::INFINITY,
                iterations_used: 0,
                trace: vec![TraceRecord {
                    iter: 0,
                    lb: f64::INFINITY,
                    ub: f64::INFINITY,
                    feasible_found: false,
                }],
                dual: None,
                exhausted: true,
            })
        }
        Err(e) => return Err(e),
    };

    let mut incumbent = dual.best_feasible.clone();
    let mut ub = incumbent.as_ref().map_or(f64::INFINITY, |(_, v)| v.f);
    let mut lb = dual.dual_value.min(ub);
    let mut trace = vec![TraceRecord {
        iter: 0,
        lb,
        ub,
        feasible_found: incumbent.is_some(),
    }];
    let mut exhausted = lb >= ub;
    let mut iterations = 0;

    if !exhausted && l != Some(0) {
        let root = solve_weighted_ssp(model, &dual.lambda_star, heuristic)?;
        let mut stream = PolicyEnumerator::with_root(model, &dual.lambda_star, heuristic, root);
        loop {
            if l.is_some_and(|cap| iterations >= cap) {
                break;
            }
            let Some(bound) = stream.peek_bound() else {
                lb = ub;
                exhausted = true;
                break;
            };
            if bound >= ub {
                lb = ub;
                exhausted = true;
                break;
            }
            let Some(item) = stream.next() else {
                lb = ub;
                exhausted = true;
                break;
            };
            let item = item?;
            iterations += 1;
            if item.value.is_feasible() && item.value.f < ub {
                ub = item.value.f;
                incumbent = Some((item.policy, item.value));
            }
            lb = lb.max(item.lagrangian.min(ub));
            trace.push(TraceRecord {
                iter: iterations,
                lb,
                ub,
                feasible_found: incumbent.is_some(),
            });
        }
        if exhausted {
            // The bound certified by the queue belongs to the last expansion.
            if let Some(last) = trace.last_mut() {
                last.lb = lb;
            }
        }
    }

    Ok(AnytimeResult {
        incumbent,
        lower_bound: lb,
        upper_bound: ub,
        iterations_used: iterations,
        trace,
        dual: Some(dual),
        exhausted,
    })
}

/// Like [`anytime_run`], but a certified infeasible problem is an error.
pub fn anytime_solve(
    model: &CsspModel,
    l: Option<usize>,
    heuristic: &dyn Heuristic,
) -> Result<AnytimeResult, SolveError> {
    let result = anytime_run(model, l, heuristic)?;
    if result.is_certified_infeasible() {
        return Err(SolveError::Infeasible(Box::new(result)));
    }
    Ok(result)
}

pub fn write_trace_csv(trace: &[TraceRecord], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "iter,lb,ub,feasible_found")?;
    for r in trace {
        writeln!(out, "{},{},{},{}", r.iter, r.lb, r.ub, r.feasible_found)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ZeroHeuristic;
    use crate::testing::{ch1, ch1_with_bound};

    #[test]
    fn ch1_dual_only() {
        let r = anytime_solve(&ch1(), Some(0), &ZeroHeuristic).unwrap();
        assert_eq!(r.lower_bound, 6.0);
        assert_eq!(r.upper_bound, 10.0);
        assert_eq!(r.iterations_used, 0);
        assert_eq!(r.incumbent.unwrap().0.get(0), Some(1));
    }

    #[test]
    fn ch1_to_convergence() {
        let r = anytime_solve(&ch1(), None, &ZeroHeuristic).unwrap();
        assert_eq!(r.upper_bound, 10.0);
        assert_eq!(r.lower_bound, 10.0);
        assert!(r.exhausted);
        let (p, v) = r.incumbent.unwrap();
        assert_eq!(p.get(0), Some(1));
        assert_eq!(v.f, 10.0);
        for w in r.trace.windows(2) {
            assert!(w[0].lb <= w[1].lb && w[0].ub >= w[1].ub);
        }
    }

    #[test]
    fn ch1_tight_bound_is_infeasible() {
        match anytime_solve(&ch1_with_bound(0.5), None, &ZeroHeuristic) {
            Err(SolveError::Infeasible(r)) => {
                assert_eq!(r.upper_bound, f64::INFINITY);
                assert!(r.incumbent.is_none());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn trace_csv_header() {
        let r = anytime_solve(&ch1(), None, &ZeroHeuristic).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,lb,ub,feasible_found\n0,6,10,true\n"));
    }
}
