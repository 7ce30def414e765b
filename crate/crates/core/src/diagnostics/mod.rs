//! Derived fields and curves: plastic strain measures, second-order work,
//! loading curves and ground profiles.

pub mod bands;

use serde::{Deserialize, Serialize};

use crate::dynamics::CurveSample;
use crate::lattice::Mat2;

pub use bands::{upslope_sequence, 
    band_mask, detect_lines, negative_work_overlap, retrogression_distance, track_band_roots, BandEvent,
    HoughOptions, LineFeature, RetrogressionReport,
};

const SQRT_2_3: f64 = 0.816_496_580_927_726;

/// Increments `(Δε_ps, Δε_pv)` of one plastic step with principal flow
/// direction `flow`: `√(2/3)‖dev Δεᵖ‖` and `tr Δεᵖ` (dilation positive).
pub fn accumulate_plastic_strains(dgamma: f64, flow: &[f64; 3]) -> (f64, f64) {
    if dgamma == 0.0 {
        return (0.0, 0.0);
    }
    let tr = flow[0] + flow[1] + flow[2];
    let dev = flow.map(|m| m - tr / 3.0);
    let norm = (dev[0] * dev[0] + dev[1] * dev[1] + dev[2] * dev[2]).sqrt();
    (SQRT_2_3 * dgamma * norm, dgamma * tr)
}

/// `W₂ = ΔP̄ : ΔF` between two states.
pub fn second_order_work(p0: &Mat2, p1: &Mat2, f0: &Mat2, f1: &Mat2) -> f64 {
    (p1 - p0).component_mul(&(f1 - f0)).sum()
}

/// Peak of a loading curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePeak {
    pub displacement: f64,
    pub reaction: f64,
    /// Lowest reaction after the peak relative to the peak.
    pub post_peak_drop: f64,
}

/// Peak of the loading curve; `None` for an empty or undriven curve.
pub fn curve_peak(curve: &[CurveSample]) -> Option<CurvePeak> {
    if curve.iter().all(|s| s.displacement == 0.0) {
        return None;
    }
    let (k, peak) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.reaction.total_cmp(&b.1.reaction))?;
    let after = curve[k..].iter().map(|s| s.reaction).fold(f64::INFINITY, f64::min);
    Some(CurvePeak {
        displacement: peak.displacement,
        reaction: peak.reaction,
        post_peak_drop: if peak.reaction != 0.0 { 1.0 - after / peak.reaction } else { 0.0 },
    })
}

/// `∫ R du` along the curve (trapezoidal), the work done by the driver.
pub fn driver_work(curve: &[CurveSample]) -> f64 {
    curve
        .windows(2)
        .map(|w| 0.5 * (w[0].reaction + w[1].reaction) * (w[1].displacement - w[0].displacement))
        .sum()
}

/// One bin of a ground profile; `height = None` marks a gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub x: f64,
    pub height: Option<f64>,
}

/// Highest point in every horizontal bin of width `bin` covering
/// `[x_min, x_max)`. The reported height is the top of the point's cell
/// (`y + Δx/2`) so an undeformed body reproduces its outline.
pub fn ground_profile(positions: &[[f64; 2]], bin: f64, half_cell: f64, x_min: f64, x_max: f64) -> Vec<ProfileBin> {
    let n = ((x_max - x_min) / bin).ceil().max(0.0) as usize;
    let mut top = vec![None::<f64>; n];
    for p in positions {
        let k = ((p[0] - x_min) / bin).floor();
        if k < 0.0 || k >= n as f64 {
            continue;
        }
        let slot = &mut top[k as usize];
        let y = p[1] + half_cell;
        *slot = Some(slot.map_or(y, |t| t.max(y)));
    }
    top.into_iter()
        .enumerate()
        .map(|(k, height)| ProfileBin {
            x: x_min + (k as f64 + 0.5) * bin,
            height,
        })
        .collect()
}

/// Counts horst/graben oscillations: alternating local extrema of the
/// profile whose height differences exceed `prominence`. Returns the
/// number of graben (interior minima) flanked by higher ground on both
/// sides.
pub fn profile_oscillations(profile: &[ProfileBin], prominence: f64) -> usize {
    let ys: Vec<f64> = profile.iter().filter_map(|b| b.height).collect();
    if ys.len() < 3 {
        return 0;
    }
    // turning points with hysteresis `prominence`
    let mut extrema: Vec<(bool, f64)> = Vec::new(); // (is_max, value)
    let mut rising: Option<bool> = None;
    let (mut low, mut high) = (ys[0], ys[0]);
    let mut candidate = ys[0];
    for &y in &ys[1..] {
        match rising {
            None => {
                low = low.min(y);
                high = high.max(y);
                if y - low >= prominence {
                    extrema.push((false, low));
                    rising = Some(true);
                    candidate = y;
                } else if high - y >= prominence {
                    extrema.push((true, high));
                    rising = Some(false);
                    candidate = y;
                }
            }
            Some(true) => {
                if y > candidate {
                    candidate = y;
                } else if candidate - y >= prominence {
                    extrema.push((true, candidate));
                    rising = Some(false);
                    candidate = y;
                }
            }
            Some(false) => {
                if y < candidate {
                    candidate = y;
                } else if y - candidate >= prominence {
                    extrema.push((false, candidate));
                    rising = Some(true);
                    candidate = y;
                }
            }
        }
    }
    // interior minima: a max before and after
    let mut count = 0;
    for k in 1..extrema.len() {
        if !extrema[k].0 && extrema[..k].iter().any(|e| e.0) && (k + 1 < extrema.len() || rising == Some(true)) {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn elastic_step_leaves_strains() {
        assert_eq!(accumulate_plastic_strains(0.0, &[1.0, 2.0, 3.0]), (0.0, 0.0));
    }

    #[test]
    fn cone_flow_increments() {
        // √(3/2) n̂ + α₃/3 with a unit deviator direction n̂
        let n = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
        let a3 = 0.5665;
        let flow = n.map(|x| 1.5f64.sqrt() * x + a3 / 3.0);
        let (ps, pv) = accumulate_plastic_strains(0.01, &flow);
        assert_relative_eq!(ps, 0.01, epsilon = 1e-15);
        assert_relative_eq!(pv, 0.01 * a3, epsilon = 1e-15);
        let (_, pv0) = accumulate_plastic_strains(0.01, &n.map(|x| 1.5f64.sqrt() * x));
        assert!(pv0.abs() < 1e-18);
    }

    #[test]
    fn work_signs() {
        let f0 = Mat2::identity();
        let f1 = Mat2::new(1.01, 0.0, 0.0, 0.99);
        let p0 = Mat2::zeros();
        let p1 = Mat2::new(2.0e4, 0.0, 0.0, -2.0e4);
        assert!(second_order_work(&p0, &p1, &f0, &f1) > 0.0);
        assert_eq!(second_order_work(&p0, &p1, &f0, &f0), 0.0);
    }

    #[test]
    fn peak_and_work() {
        let curve: Vec<CurveSample> = [0.0, 1.0, 2.0, 1.5, 1.0]
            .iter()
            .enumerate()
            .map(|(k, &r)| CurveSample {
                time: k as f64,
                displacement: 0.1 * k as f64,
                reaction: r,
            })
            .collect();
        let p = curve_peak(&curve).unwrap();
        assert_relative_eq!(p.displacement, 0.2);
        assert_relative_eq!(p.post_peak_drop, 0.5);
        assert_relative_eq!(driver_work(&curve), 0.05 + 0.15 + 0.175 + 0.125, epsilon = 1e-14);
    }

    #[test]
    fn flat_profile_of_a_rectangle() {
        let pts: Vec<[f64; 2]> = (0..4)
            .flat_map(|i| (0..3).map(move |j| [0.5 + i as f64, 0.5 + j as f64]))
            .collect();
        let prof = ground_profile(&pts, 1.0, 0.5, 0.0, 5.0);
        assert_eq!(prof.len(), 5);
        assert!(prof[..4].iter().all(|b| b.height == Some(3.0)));
        assert_eq!(prof[4].height, None);
        assert_eq!(profile_oscillations(&prof, 0.1), 0);
    }

    #[test]
    fn oscillations_are_counted() {
        let heights = [10.0, 10.0, 6.0, 6.0, 9.0, 9.0, 5.0, 8.0, 3.0, 2.0];
        let prof: Vec<ProfileBin> = heights
            .iter()
            .enumerate()
            .map(|(k, &h)| ProfileBin { x: k as f64, height: Some(h) })
            .collect();
        assert_eq!(profile_oscillations(&prof, 1.0), 2);
        // a monotone slope has none
        let mono: Vec<ProfileBin> = (0..10)
            .map(|k| ProfileBin { x: k as f64, height: Some(10.0 - k as f64) })
            .collect();
        assert_eq!(profile_oscillations(&mono, 0.5), 0);
    }
}
