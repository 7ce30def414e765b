//! Shear-band extraction from plastic-strain fields.
//!
//! Bands are found as straight lines through a thresholded point mask with a
//! Hough transform; each accepted line is refined by an orthogonal
//! least-squares fit over the points that support it.

use serde::{Deserialize, Serialize};

/// Points whose value reaches `fraction` of the field maximum.
pub fn band_mask(values: &[f64], fraction: f64) -> Vec<bool> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return vec![false; values.len()];
    }
    values.iter().map(|&v| v >= fraction * max).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughOptions {
    /// Angular resolution (degrees).
    pub angle_step: f64,
    /// Offset bin width and support half-width (m).
    pub width: f64,
    /// Minimum number of supporting points.
    pub min_support: usize,
    /// Minimum extent of the supporting points along the line (m).
    pub min_length: f64,
    pub max_lines: usize,
    /// Masked points closer than this to an accepted line are removed with
    /// it, so one thick band yields one line (m).
    pub exclusion: f64,
}

/// A detected straight band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFeature {
    /// Inclination from the horizontal in (−90°, 90°]; positive rises to
    /// the right.
    pub angle: f64,
    pub centroid: [f64; 2],
    pub support: usize,
    pub length: f64,
    /// RMS orthogonal distance of the supporting points (m).
    pub residual: f64,
    /// Indices of the supporting points.
    pub members: Vec<usize>,
}

impl LineFeature {
    pub fn slope_sign(&self) -> f64 {
        if self.angle.abs() < 1e-9 || (self.angle - 90.0).abs() < 1e-9 {
            0.0
        } else {
            self.angle.signum()
        }
    }

    /// Direction unit vector.
    pub fn direction(&self) -> [f64; 2] {
        let a = self.angle.to_radians();
        [a.cos(), a.sin()]
    }

    /// `x` where the line crosses height `y` (None for horizontal lines).
    pub fn x_at(&self, y: f64) -> Option<f64> {
        let [dx, dy] = self.direction();
        (dy.abs() > 1e-12).then(|| self.centroid[0] + (y - self.centroid[1]) * dx / dy)
    }
}

/// Greedy Hough extraction of up to `max_lines` lines from the masked
/// points. Accepted lines remove their supporting points, and every point
/// within `exclusion` of the fitted line, before the next search.
pub fn detect_lines(positions: &[[f64; 2]], mask: &[bool], opts: &HoughOptions) -> Vec<LineFeature> {
    let mut active: Vec<usize> = (0..positions.len()).filter(|&i| mask[i]).collect();
    let mut lines = Vec::new();
    if active.is_empty() {
        return lines;
    }
    let n_theta = (180.0 / opts.angle_step).round() as usize;
    let (cx, cy) = {
        let (sx, sy) = active
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + positions[i][0], b + positions[i][1]));
        (sx / active.len() as f64, sy / active.len() as f64)
    };
    let r_max = active
        .iter()
        .map(|&i| (positions[i][0] - cx).hypot(positions[i][1] - cy))
        .fold(0.0, f64::max)
        + opts.width;
    let n_rho = (2.0 * r_max / opts.width).ceil() as usize + 1;
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|k| (k as f64 * opts.angle_step).to_radians().sin_cos())
        .collect();

    // a line that fails the extent test is masked out of the accumulator
    let mut rejected: Vec<(usize, usize)> = Vec::new();
    while lines.len() < opts.max_lines && active.len() >= opts.min_support {
        let mut acc = vec![0u32; n_theta * n_rho];
        for &i in &active {
            let (x, y) = (positions[i][0] - cx, positions[i][1] - cy);
            for (k, &(s, c)) in trig.iter().enumerate() {
                let rho = x * c + y * s;
                let r = ((rho + r_max) / opts.width).floor() as usize;
                if r < n_rho {
                    acc[k * n_rho + r] += 1;
                }
            }
        }
        for &(k, r) in &rejected {
            acc[k * n_rho + r] = 0;
        }
        let (best, &votes) = acc
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty accumulator");
        if (votes as usize) < opts.min_support {
            break;
        }
        let (k, r) = (best / n_rho, best % n_rho);
        let (s, c) = trig[k];
        let rho = (r as f64 + 0.5) * opts.width - r_max;
        let near: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| ((positions[i][0] - cx) * c + (positions[i][1] - cy) * s - rho).abs() <= opts.width)
            .collect();
        match fit_line(positions, &near) {
            Some(line) if line.length >= opts.min_length && line.support >= opts.min_support => {
                let [dx, dy] = line.direction();
                let off = |i: usize| {
                    ((positions[i][0] - line.centroid[0]) * dy - (positions[i][1] - line.centroid[1]) * dx).abs()
                };
                active.retain(|&i| !near.contains(&i) && off(i) > opts.exclusion);
                lines.push(line);
            }
            _ => rejected.push((k, r)),
        }
        if rejected.len() > 10_000 {
            break;
        }
    }
    lines
}

/// Orthogonal regression through `members`.
fn fit_line(positions: &[[f64; 2]], members: &[usize]) -> Option<LineFeature> {
    if members.len() < 2 {
        return None;
    }
    let n = members.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for &i in members {
        mx += positions[i][0];
        my += positions[i][1];
    }
    mx /= n;
    my /= n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &i in members {
        let (dx, dy) = (positions[i][0] - mx, positions[i][1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (s, c) = theta.sin_cos();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut ss = 0.0;
    for &i in members {
        let (dx, dy) = (positions[i][0] - mx, positions[i][1] - my);
        let t = dx * c + dy * s;
        lo = lo.min(t);
        hi = hi.max(t);
        let d = -dx * s + dy * c;
        ss += d * d;
    }
    let mut angle = theta.to_degrees();
    if angle <= -90.0 {
        angle += 180.0;
    } else if angle > 90.0 {
        angle -= 180.0;
    }
    Some(LineFeature {
        angle,
        centroid: [mx, my],
        support: members.len(),
        length: hi - lo,
        residual: (ss / n).sqrt(),
        members: members.to_vec(),
    })
}

/// Fraction of negative-work points that lie in `mask`. Work values with
/// magnitude below `floor` count as zero.
pub fn negative_work_overlap(w2: &[f64], mask: &[bool], floor: f64) -> Option<f64> {
    let negative: Vec<usize> = (0..w2.len()).filter(|&i| w2[i] < -floor).collect();
    if negative.is_empty() {
        return None;
    }
    let inside = negative.iter().filter(|&&i| mask[i]).count();
    Some(inside as f64 / negative.len() as f64)
}

/// First appearance of an inclined band, located by where it meets the
/// ground surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEvent {
    pub time: f64,
    /// Reference `x` where the band reaches the ground surface.
    pub surface_x: f64,
    pub angle: f64,
}

/// Clusters band detections from successive snapshots into distinct bands
/// (surface positions closer than `separation` are the same band) and
/// returns the first appearance of each, in time order.
pub fn track_band_roots(detections: &[(f64, Vec<(f64, f64)>)], separation: f64) -> Vec<BandEvent> {
    let mut events: Vec<BandEvent> = Vec::new();
    for (time, found) in detections {
        for &(x, angle) in found {
            if events.iter().all(|e| (e.surface_x - x).abs() > separation) {
                events.push(BandEvent {
                    time: *time,
                    surface_x: x,
                    angle,
                });
            }
        }
    }
    events
}

/// Longest chain of band events that appear at strictly later times with
/// roots strictly further upslope (towards smaller `x`).
pub fn upslope_sequence(events: &[BandEvent]) -> Vec<BandEvent> {
    let n = events.len();
    let mut best = vec![1usize; n];
    let mut prev = vec![usize::MAX; n];
    for j in 0..n {
        for i in 0..j {
            let later = events[j].time > events[i].time;
            let upslope = events[j].surface_x < events[i].surface_x;
            if later && upslope && best[i] + 1 > best[j] {
                best[j] = best[i] + 1;
                prev[j] = i;
            }
        }
    }
    let Some(mut k) = (0..n).max_by_key(|&k| (best[k], std::cmp::Reverse(k))) else {
        return Vec::new();
    };
    let mut chain = vec![events[k]];
    while prev[k] != usize::MAX {
        k = prev[k];
        chain.push(events[k]);
    }
    chain.reverse();
    chain
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrogressionReport {
    /// Reference `x` of the furthest-upslope failed surface point.
    pub scarp_x: f64,
    /// Distance from the crest to the scarp (m).
    pub distance: f64,
}

/// Furthest upslope extent of failure along the ground surface. `surface`
/// lists `(reference x, failed)` for the top point of every column;
/// upslope is towards smaller `x` from the crest at `crest_x`.
pub fn retrogression_distance(surface: &[(f64, bool)], crest_x: f64) -> Option<RetrogressionReport> {
    let scarp_x = surface
        .iter()
        .filter(|s| s.1)
        .map(|s| s.0)
        .fold(f64::INFINITY, f64::min);
    scarp_x.is_finite().then(|| RetrogressionReport {
        scarp_x,
        distance: (crest_x - scarp_x).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> HoughOptions {
        HoughOptions {
            angle_step: 1.0,
            width: 0.75,
            min_support: 8,
            min_length: 5.0,
            max_lines: 4,
            exclusion: 0.75,
        }
    }

    fn grid(n: usize, h: f64) -> Vec<[f64; 2]> {
        (0..n)
            .flat_map(|j| (0..n).map(move |i| [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]))
            .collect()
    }

    #[test]
    fn finds_an_x() {
        let h = 0.75;
        let pts = grid(40, h);
        let c = 20.0 * h;
        let mask: Vec<bool> = pts
            .iter()
            .map(|p| {
                let (x, y) = (p[0] - c, p[1] - c);
                (y - x).abs() < 0.6 * h || (y + x).abs() < 0.6 * h
            })
            .collect();
        let lines = detect_lines(&pts, &mask, &opts());
        assert!(lines.len() >= 2);
        let signs: Vec<f64> = lines.iter().map(|l| l.slope_sign()).collect();
        assert!(signs.contains(&1.0) && signs.contains(&-1.0));
        for l in &lines[..2] {
            assert!((l.angle.abs() - 45.0).abs() < 2.0, "{}", l.angle);
        }
    }

    #[test]
    fn empty_mask_no_lines() {
        let pts = grid(10, 1.0);
        assert!(detect_lines(&pts, &vec![false; pts.len()], &opts()).is_empty());
    }

    #[test]
    fn steep_band_angle() {
        let h = 0.5;
        let pts = grid(60, h);
        let t = 60f64.to_radians().tan();
        let mask: Vec<bool> = pts.iter().map(|p| (p[1] - t * (p[0] - 10.0)).abs() < 0.4).collect();
        let lines = detect_lines(&pts, &mask, &opts());
        assert!((lines[0].angle - 60.0).abs() < 2.0, "{}", lines[0].angle);
        let x0 = lines[0].x_at(0.0).unwrap();
        assert!((x0 - 10.0).abs() < 0.5, "{x0}");
    }

    #[test]
    fn overlap_fraction() {
        let w2 = [-1.0, -2.0, 3.0, -0.5, 0.0];
        let mask = [true, false, true, true, false];
        assert_eq!(negative_work_overlap(&w2, &mask, 0.0), Some(2.0 / 3.0));
        assert_eq!(negative_work_overlap(&[1.0, 2.0], &[true, true], 0.0), None);
    }

    #[test]
    fn upslope_chain_skips_downslope_events() {
        let ev = |time, surface_x| BandEvent {
            time,
            surface_x,
            angle: 60.0,
        };
        let events = [ev(1.0, 100.0), ev(1.0, 95.0), ev(2.0, 120.0), ev(3.0, 90.0), ev(4.0, 70.0)];
        let xs: Vec<f64> = upslope_sequence(&events).iter().map(|e| e.surface_x).collect();
        assert_eq!(xs, vec![100.0, 90.0, 70.0]);
        assert!(upslope_sequence(&[]).is_empty());
    }

    #[test]
    fn mask_threshold() {
        assert_eq!(band_mask(&[0.0, 0.5, 1.0], 0.5), vec![false, true, true]);
        assert_eq!(band_mask(&[0.0, 0.0], 0.5), vec![false, false]);
    }

    #[test]
    fn band_tracking_and_retrogression() {
        let det = vec![
            (1.0, vec![(100.0, 60.0)]),
            (2.0, vec![(101.0, 58.0), (90.0, 62.0)]),
            (3.0, vec![(80.0, 55.0), (89.5, 60.0)]),
        ];
        let events = track_band_roots(&det, 3.0);
        let xs: Vec<f64> = events.iter().map(|e| e.surface_x).collect();
        assert_eq!(xs, vec![100.0, 90.0, 80.0]);
        let chain: Vec<f64> = upslope_sequence(&events).iter().map(|e| e.surface_x).collect();
        assert_eq!(chain, vec![100.0, 90.0, 80.0]);
        let r = retrogression_distance(&[(50.0, false), (70.0, true), (90.0, true)], 110.0).unwrap();
        assert_eq!(r.distance, 40.0);
        assert!(retrogression_distance(&[(1.0, false)], 2.0).is_none());
    }
}
