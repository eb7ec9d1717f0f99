//! Handcrafted attention providers used as baselines.

use crate::belief::{BeliefError, IntentionDistribution, ATTENTION_FLOOR};
use crate::driving::{DrivingParams, Observation};
use crate::geometry::Polyline;

/// Time-to-collision cap (s).
pub const TTC_CAP: f64 = 20.0;

/// Sampling step of the time-to-collision search (s).
pub const TTC_STEP: f64 = 0.1;

/// `1/M_i` for every agent, ignoring the belief's values.
pub fn uniform_attention(b: &IntentionDistribution) -> IntentionDistribution {
    IntentionDistribution::uniform(&b.counts()).expect("a distribution never has empty agents")
}

/// First time at which the ego, moving at constant speed along its path,
/// comes within collision distance of an agent moving at constant speed along
/// `path`. Capped at [`TTC_CAP`] and floored at [`TTC_STEP`].
pub fn path_ttc(z: &Observation, agent: usize, path: &Polyline, p: &DrivingParams) -> f64 {
    let a = &z.exo[agent];
    let reach = p.ego_radius + p.exo_radius;
    let arc = path.project(a.position).arc;
    let steps = (TTC_CAP / TTC_STEP).round() as usize;
    for k in 0..=steps {
        let t = k as f64 * TTC_STEP;
        let ego = z.ego.path.point_at(z.ego.progress + z.ego.speed * t);
        let other = path.point_at(arc + a.speed * t);
        if ego.distance(other) <= reach {
            return t.max(TTC_STEP);
        }
    }
    TTC_CAP
}

/// Scores each intention by `1/t_c`, normalises per agent and floors.
pub fn ttc_attention(
    b: &IntentionDistribution,
    z: &Observation,
    paths: &[Vec<Polyline>],
    p: &DrivingParams,
) -> Result<IntentionDistribution, BeliefError> {
    if paths.len() != b.num_agents() || z.exo.len() != b.num_agents() {
        return Err(BeliefError::ShapeMismatch(format!(
            "{} agents in belief, {} observed, {} path sets",
            b.num_agents(),
            z.exo.len(),
            paths.len()
        )));
    }
    let scores = paths
        .iter()
        .enumerate()
        .map(|(i, set)| set.iter().map(|path| 1.0 / path_ttc(z, i, path, p)).collect())
        .collect();
    let q = IntentionDistribution::from_scores(scores)?;
    if q.counts() != b.counts() {
        return Err(BeliefError::ShapeMismatch("path counts differ from the belief".into()));
    }
    Ok(q.floored(ATTENTION_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driving::{EgoState, ExoState};
    use crate::geometry::Vec2;
    use std::sync::Arc;

    #[test]
    fn uniform_examples() {
        let b = IntentionDistribution::new(vec![vec![0.9, 0.1], vec![0.2, 0.3, 0.5], vec![1.0]]).unwrap();
        let u = uniform_attention(&b);
        assert_eq!(u.agent(0), &[0.5, 0.5]);
        assert_eq!(u.agent(1), &[1.0 / 3.0; 3]);
        assert_eq!(u.agent(2), &[1.0]);
    }

    fn obs() -> Observation {
        let path = Arc::new(Polyline::uniform(vec![Vec2::new(0.0, 0.0), Vec2::new(200.0, 0.0)], 6.0).unwrap());
        Observation {
            ego: EgoState::on_path(path, 0.0, 2.0),
            exo: vec![ExoState {
                position: Vec2::new(20.0, -30.0),
                speed: 0.0,
                heading: 0.0,
            }],
        }
    }

    #[test]
    fn stationary_blockers_give_inverse_ttc_ratio() {
        let p = DrivingParams::default();
        let z = obs();
        // parked agents on the ego path: with reach 2.5 the ego touches the
        // one at x=6.5 after 2 s and the one at x=10.5 after 4 s
        let at = |x: f64| Polyline::uniform(vec![Vec2::new(x, 0.0), Vec2::new(x, 10.0)], 0.0).unwrap();
        let mut z2 = z.clone();
        z2.exo[0].position = Vec2::new(8.0, 0.0);
        let b = IntentionDistribution::uniform(&[2]).unwrap();
        let q = ttc_attention(&b, &z2, &[vec![at(6.5), at(10.5)]], &p).unwrap();
        assert!((q.agent(0)[0] - (ATTENTION_FLOOR + (1.0 - 2.0 * ATTENTION_FLOOR) * 2.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn no_conflict_gives_uniform() {
        let p = DrivingParams::default();
        let z = obs();
        let far = Polyline::uniform(vec![Vec2::new(20.0, -30.0), Vec2::new(40.0, -30.0)], 4.0).unwrap();
        let far2 = Polyline::uniform(vec![Vec2::new(20.0, -30.0), Vec2::new(20.0, -60.0)], 4.0).unwrap();
        let b = IntentionDistribution::uniform(&[2]).unwrap();
        let q = ttc_attention(&b, &z, &[vec![far, far2]], &p).unwrap();
        assert!((q.agent(0)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn capped_ratio() {
        let p = DrivingParams::default();
        let z = obs();
        // reached after 1 s versus never
        let near = Polyline::uniform(vec![Vec2::new(4.5, 0.0), Vec2::new(4.5, 10.0)], 0.0).unwrap();
        let far = Polyline::uniform(vec![Vec2::new(20.0, -30.0), Vec2::new(20.0, -60.0)], 0.0).unwrap();
        assert!((path_ttc(&z, 0, &near, &p) - 1.0).abs() < 1e-9);
        let b = IntentionDistribution::uniform(&[2]).unwrap();
        let q = ttc_attention(&b, &z, &[vec![near, far]], &p).unwrap();
        let expected = ATTENTION_FLOOR + (1.0 - 2.0 * ATTENTION_FLOOR) * 20.0 / 21.0;
        assert!((q.agent(0)[0] - expected).abs() < 1e-9);
    }
}
