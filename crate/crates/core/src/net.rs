//! Finite candidate nets over a ball.
//!
//! [`build_net`] lays an axis-aligned grid with spacing `2r/sqrt(d)` over the
//! ball of radius `R`, so that every ball point is within `r` (Euclidean) of
//! a net point. Grid points just outside the ball whose cells still touch it
//! are projected radially onto the sphere: projection onto a convex set is
//! non-expansive, so the covering guarantee survives while every net point
//! stays inside the closed ball.
//!
//! Net size grows like `(2R sqrt(d) / 2r)^d`, so a hard cap (default one
//! million points) guards against accidentally requesting an astronomically
//! large net; exceeding it is a feasibility error, not an attempt to build.

use ndarray::Array1;

use crate::error::{Error, Result};

/// Default maximum number of enumerated grid points.
pub const DEFAULT_NET_CAP: usize = 1_000_000;

/// A finite set of candidate points covering a ball.
#[derive(Clone, Debug)]
pub struct CandidateNet {
    points: Vec<Array1<f64>>,
    granularity: f64,
    ball_radius: f64,
    spacing: f64,
}

impl CandidateNet {
    pub fn points(&self) -> &[Array1<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Covering radius `r`: every ball point is within `r` of some net point.
    pub fn granularity(&self) -> f64 {
        self.granularity
    }

    pub fn ball_radius(&self) -> f64 {
        self.ball_radius
    }

    /// Grid spacing `2r/sqrt(d)`; zero for the degenerate single-point net.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Build a net from explicit points (e.g. the candidate list of a
    /// boosting stage). Points must be non-empty and lie in the closed ball.
    pub fn from_points(
        points: Vec<Array1<f64>>,
        ball_radius: f64,
        granularity: f64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid(
                "candidate net must contain at least one point",
            ));
        }
        for (i, p) in points.iter().enumerate() {
            let norm = p.dot(p).sqrt();
            if norm > ball_radius * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "net point {i} has norm {norm} > ball radius {ball_radius}"
                )));
            }
        }
        Ok(CandidateNet {
            points,
            granularity,
            ball_radius,
            spacing: 0.0,
        })
    }
}

/// Build a grid net over the ball of radius `ball_radius` with covering
/// radius `granularity`, using the default size cap.
pub fn build_net(d: usize, ball_radius: f64, granularity: f64) -> Result<CandidateNet> {
    build_net_with_cap(d, ball_radius, granularity, DEFAULT_NET_CAP)
}

/// [`build_net`] with an explicit cap on the number of enumerated points.
pub fn build_net_with_cap(
    d: usize,
    ball_radius: f64,
    granularity: f64,
    cap: usize,
) -> Result<CandidateNet> {
    if d == 0 {
        return Err(Error::invalid("net dimension must be >= 1"));
    }
    for (name, v) in [("ball_radius", ball_radius), ("granularity", granularity)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!(
                "{name} must be finite and > 0, got {v}"
            )));
        }
    }

    // A covering radius at least the ball radius is served by the center alone.
    if granularity >= ball_radius {
        return Ok(CandidateNet {
            points: vec![Array1::zeros(d)],
            granularity,
            ball_radius,
            spacing: 0.0,
        });
    }

    let spacing = 2.0 * granularity / (d as f64).sqrt();
    // Grid points up to R + r from the origin can own a cell that touches the
    // ball (cell half-diagonal = sqrt(d) * spacing / 2 = granularity).
    let reach = ball_radius + granularity;
    let k_max = (reach / spacing).floor() as i64;
    let per_axis = 2 * k_max + 1;

    // Feasibility check before enumerating anything.
    let log_count = d as f64 * (per_axis as f64).ln();
    if log_count > (cap as f64).ln() + 1e-12 {
        return Err(Error::Feasibility(format!(
            "net would enumerate {per_axis}^{d} grid points, exceeding the cap of {cap}; \
             increase the granularity or lower the dimension"
        )));
    }

    let mut points: Vec<Array1<f64>> = Vec::new();
    let mut seen: std::collections::HashSet<Vec<u64>> = std::collections::HashSet::new();
    let mut digits = vec![-k_max; d];
    loop {
        let p: Array1<f64> = digits.iter().map(|&k| k as f64 * spacing).collect();
        let norm = p.dot(&p).sqrt();
        let candidate = if norm <= ball_radius {
            Some(p)
        } else if norm <= reach {
            // Cell touches the ball: keep the radial projection onto the sphere.
            Some(p * (ball_radius / norm))
        } else {
            None
        };
        if let Some(p) = candidate {
            let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                points.push(p);
            }
        }

        // Odometer increment over [-k_max, k_max]^d.
        let mut i = 0;
        loop {
            if i == d {
                let net = CandidateNet {
                    points,
                    granularity,
                    ball_radius,
                    spacing,
                };
                debug_assert!(!net.points.is_empty());
                return Ok(net);
            }
            digits[i] += 1;
            if digits[i] <= k_max {
                break;
            }
            digits[i] = -k_max;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::unit_ball_point;
    use crate::rng::RngStream;

    fn nearest_distance(net: &CandidateNet, p: &Array1<f64>) -> f64 {
        net.points()
            .iter()
            .map(|q| {
                let diff = p - q;
                diff.dot(&diff).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn one_dimensional_example() {
        let net = build_net(1, 1.0, 0.5).unwrap();
        let mut xs: Vec<f64> = net.points().iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);

        // Exhaustive probe of the interval.
        for i in 0..=1000 {
            let x = -1.0 + 2.0 * i as f64 / 1000.0;
            let p = Array1::from_vec(vec![x]);
            assert!(
                nearest_distance(&net, &p) <= 0.5 + 1e-12,
                "uncovered point {x}"
            );
        }
    }

    #[test]
    fn coarse_granularity_collapses_to_center() {
        let net = build_net(4, 1.0, 2.0).unwrap();
        assert_eq!(net.len(), 1);
        assert!(net.points()[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covering_holds_for_random_probes() {
        for (d, radius, granularity) in [(2, 1.0, 0.3), (3, 2.0, 0.8), (4, 1.5, 1.0)] {
            let net = build_net(d, radius, granularity).unwrap();
            // Every net point lies in the closed ball.
            for p in net.points() {
                assert!(p.dot(p).sqrt() <= radius + 1e-12);
            }
            let mut rng = RngStream::new(77, d as u64).rng();
            for _ in 0..10_000 {
                let probe = unit_ball_point(d, &mut rng) * radius;
                let dist = nearest_distance(&net, &probe);
                assert!(
                    dist <= granularity + 1e-9,
                    "probe at distance {dist} > {granularity} (d={d})"
                );
            }
        }
    }

    #[test]
    fn grid_spacing_matches_contract() {
        let net = build_net(4, 1.5, 0.6).unwrap();
        assert!((net.spacing() - 2.0 * 0.6 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn oversized_request_is_a_feasibility_error() {
        match build_net(100, 2.0, 0.01) {
            Err(Error::Feasibility(msg)) => {
                assert!(msg.contains(&DEFAULT_NET_CAP.to_string()), "message: {msg}")
            }
            other => panic!("expected feasibility error, got {other:?}"),
        }
    }

    #[test]
    fn bad_arguments_error() {
        assert!(build_net(0, 1.0, 0.5).is_err());
        assert!(build_net(2, 0.0, 0.5).is_err());
        assert!(build_net(2, 1.0, 0.0).is_err());
    }

    #[test]
    fn explicit_point_nets_validate_membership() {
        let inside = vec![Array1::from_vec(vec![0.5, 0.0])];
        assert!(CandidateNet::from_points(inside, 1.0, 0.1).is_ok());
        let outside = vec![Array1::from_vec(vec![2.0, 0.0])];
        assert!(CandidateNet::from_points(outside, 1.0, 0.1).is_err());
        assert!(CandidateNet::from_points(vec![], 1.0, 0.1).is_err());
    }
}
