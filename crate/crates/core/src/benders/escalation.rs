use crate::error::{Error, Result};

pub const DEFAULT_MAX_DOUBLINGS: usize = 10;

#[derive(Debug, Clone)]
pub struct Escalation<T> {
    pub result: T,
    pub lambda: f64,
    pub doublings: usize,
    /// Penalty tried and the scenarios still shedding, per failed attempt.
    pub history: Vec<(f64, Vec<usize>)>,
}

/// Re-runs `run` at `lambda0 * 2^j` for `j = 0, 1, ...` until `shedding`
/// reports no scenario, or `max_doublings` doublings have failed.
pub fn escalate_shed_penalty<T>(
    lambda0: f64,
    max_doublings: usize,
    mut run: impl FnMut(f64) -> Result<T>,
    shedding: impl Fn(&T) -> Vec<usize>,
) -> Result<Escalation<T>> {
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(Error::InvalidInput(format!("initial shed penalty must be positive, got {lambda0}")));
    }
    let mut history = Vec::new();
    for j in 0..=max_doublings {
        let lambda = lambda0 * 2f64.powi(j as i32);
        let result = run(lambda)?;
        let s = shedding(&result);
        if s.is_empty() {
            return Ok(Escalation {
                result,
                lambda,
                doublings: j,
                history,
            });
        }
        log::info!("shed persists at lambda = {lambda} in scenario(s) {s:?}; doubling");
        history.push((lambda, s));
    }
    Err(Error::PenaltyEscalation {
        doublings: max_doublings,
        scenarios: history.pop().map(|(_, s)| s).unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pass_when_already_clean() {
        let e = escalate_shed_penalty(5.0, 10, Ok, |_| vec![]).unwrap();
        assert_eq!((e.doublings, e.lambda), (0, 5.0));
    }

    #[test]
    fn doubles_until_threshold() {
        let mut tried = Vec::new();
        let e = escalate_shed_penalty(
            1.0,
            10,
            |l| {
                tried.push(l);
                Ok(l)
            },
            |&l| if l < 50.0 { vec![0] } else { vec![] },
        )
        .unwrap();
        assert_eq!(e.lambda, 64.0);
        assert_eq!(e.doublings, 6);
        assert!(tried.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gives_up_after_the_cap() {
        let err = escalate_shed_penalty(1.0, 3, Ok, |_| vec![2]).unwrap_err();
        assert!(matches!(err, Error::PenaltyEscalation { doublings: 3, scenarios } if scenarios == vec![2]));
    }
}
