//! Post-processing of a run directory: loading-curve peak, ground profiles,
//! shear-band lines and retrogression.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    band_mask, curve_peak, detect_lines, ground_profile, profile_oscillations, retrogression_distance, CurvePeak,
    negative_work_overlap, track_band_roots, upslope_sequence, BandEvent, HoughOptions, LineFeature, ProfileBin, RetrogressionReport,
};
use crate::error::IoError;

use super::output::{read_curve, Manifest};
use super::vtk::read_snapshot;
use super::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Band mask threshold as a fraction of the maximum `eps_ps`.
    pub mask_fraction: f64,
    pub hough: HoughOptions,
    /// `eps_ps` above which a surface point counts as failed.
    pub failure_strain: f64,
    /// Height hysteresis for counting horsts and grabens (m).
    pub prominence: f64,
    /// Band roots closer than this along the surface are one band (m).
    pub root_separation: f64,
    /// Bands flatter than this (degrees) are left out of the band roots and
    /// the horst angle.
    pub min_incline: f64,
}

impl ReportOptions {
    pub fn for_spacing(spacing: f64) -> Self {
        Self {
            mask_fraction: 0.3,
            hough: HoughOptions {
                angle_step: 1.0,
                width: spacing,
                min_support: 8,
                min_length: 6.0 * spacing,
                max_lines: 8,
                exclusion: 3.0 * spacing,
            },
            failure_strain: 0.05,
            prominence: 0.5 * spacing,
            root_separation: 3.0 * spacing,
            min_incline: 20.0,
        }
    }
}

/// A detected band without its member list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLine {
    pub angle: f64,
    pub centroid: [f64; 2],
    pub support: usize,
    pub length: f64,
    pub residual: f64,
    /// Reference `x` of the highest supporting point.
    pub surface_x: f64,
}

/// Bands of a snapshot, found on the reference configuration.
pub fn band_lines(s: &Snapshot, opts: &ReportOptions) -> (Vec<bool>, Vec<BandLine>) {
    let mask = band_mask(&s.eps_ps, opts.mask_fraction);
    let lines = detect_lines(&s.reference, &mask, &opts.hough)
        .into_iter()
        .map(|l: LineFeature| {
            let top = l
                .members
                .iter()
                .max_by(|&&a, &&b| s.reference[a][1].total_cmp(&s.reference[b][1]))
                .copied()
                .unwrap_or(0);
            BandLine {
                angle: l.angle,
                centroid: l.centroid,
                support: l.support,
                length: l.length,
                residual: l.residual,
                surface_x: s.reference[top][0],
            }
        })
        .collect();
    (mask, lines)
}

/// Band geometry and the plastic and work fields inside the band mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub time: f64,
    pub bands: Vec<BandLine>,
    /// Bands rising to the right and to the left were both found.
    pub conjugate: bool,
    /// Mean `eps_pv` over the band mask.
    pub mean_eps_pv: Option<f64>,
    /// Fraction of negative-`w2` points inside the band mask.
    pub negative_work_overlap: Option<f64>,
}

/// `w2` values below this fraction of the largest `|w2|` count as zero.
pub const WORK_FLOOR_FRACTION: f64 = 1e-3;

impl BandMetrics {
    pub fn of(s: &Snapshot, opts: &ReportOptions) -> Self {
        let (mask, bands) = band_lines(s, opts);
        let rising = bands.iter().any(|b| b.angle > 0.0 && b.angle < 90.0);
        let falling = bands.iter().any(|b| b.angle < 0.0);
        let inside: Vec<f64> = (0..s.len()).filter(|&i| mask[i]).map(|i| s.eps_pv[i]).collect();
        let floor = WORK_FLOOR_FRACTION * s.w2.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        Self {
            time: s.time,
            conjugate: rising && falling,
            mean_eps_pv: (!inside.is_empty()).then(|| inside.iter().sum::<f64>() / inside.len() as f64),
            negative_work_overlap: negative_work_overlap(&s.w2, &mask, floor),
            bands,
        }
    }
}

/// Index of the highest reference point in every lattice column.
pub fn surface_points(reference: &[[f64; 2]], spacing: f64) -> Vec<usize> {
    let mut top: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
    for (i, p) in reference.iter().enumerate() {
        let col = (p[0] / spacing).floor() as i64;
        top.entry(col)
            .and_modify(|j| {
                if p[1] > reference[*j][1] {
                    *j = i
                }
            })
            .or_insert(i);
    }
    top.into_values().collect()
}

/// `(reference x, failed)` of every surface point.
pub fn failed_surface(s: &Snapshot, spacing: f64, failure_strain: f64) -> Vec<(f64, bool)> {
    surface_points(&s.reference, spacing)
        .into_iter()
        .map(|i| (s.reference[i][0], s.eps_ps[i] >= failure_strain))
        .collect()
}

/// Median of `|angle|` over the detected bands at least `min_incline`
/// steep.
pub fn horst_angle(lines: &[BandLine], min_incline: f64) -> Option<f64> {
    let mut a: Vec<f64> = lines.iter().map(|l| l.angle.abs()).filter(|&a| a >= min_incline).collect();
    if a.is_empty() {
        return None;
    }
    a.sort_by(f64::total_cmp);
    let m = a.len() / 2;
    Some(if a.len() % 2 == 1 { a[m] } else { 0.5 * (a[m - 1] + a[m]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub time: f64,
    pub peak: Option<CurvePeak>,
    pub bands: Vec<BandLine>,
    pub horst_angle: Option<f64>,
    pub retrogression: Option<RetrogressionReport>,
    pub oscillations: usize,
    /// Band metrics of every snapshot.
    pub history: Vec<BandMetrics>,
    /// First appearance of each distinct inclined band, in time order.
    pub band_roots: Vec<BandEvent>,
    /// Longest run of band roots moving upslope over time.
    pub upslope_roots: Vec<BandEvent>,
    pub initial_profile: Vec<ProfileBin>,
    pub final_profile: Vec<ProfileBin>,
}

impl RunReport {
    pub fn profile_csv(&self) -> String {
        let mut out = String::from("x,initial_height,final_height\n");
        let cell = |h: Option<f64>| h.map_or(String::new(), |h| format!("{h:.10e}"));
        for (a, b) in self.initial_profile.iter().zip(&self.final_profile) {
            writeln!(out, "{:.10e},{},{}", a.x, cell(a.height), cell(b.height)).unwrap();
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(out, "scenario: {}", self.scenario).unwrap();
        writeln!(out, "final time: {:.4} s", self.time).unwrap();
        match &self.peak {
            Some(p) => writeln!(
                out,
                "peak reaction: {:.6e} N/m at displacement {:.4} m (post-peak drop {:.1}%)",
                p.reaction,
                p.displacement,
                100.0 * p.post_peak_drop
            )
            .unwrap(),
            None => writeln!(out, "peak reaction: no loading curve").unwrap(),
        }
        writeln!(out, "bands: {}", self.bands.len()).unwrap();
        for b in &self.bands {
            writeln!(
                out,
                "  angle {:7.2} deg  centroid ({:.2}, {:.2})  length {:.2} m  support {}  residual {:.3} m",
                b.angle, b.centroid[0], b.centroid[1], b.length, b.support, b.residual
            )
            .unwrap();
        }
        match self.horst_angle {
            Some(a) => writeln!(out, "horst angle: {a:.1} deg").unwrap(),
            None => writeln!(out, "horst angle: none").unwrap(),
        }
        match &self.retrogression {
            Some(r) => writeln!(out, "retrogression: {:.2} m (scarp at x = {:.2} m)", r.distance, r.scarp_x).unwrap(),
            None => writeln!(out, "retrogression: none").unwrap(),
        }
        writeln!(out, "horst/graben oscillations: {}", self.oscillations).unwrap();
        writeln!(out, "band roots:").unwrap();
        for e in &self.band_roots {
            writeln!(out, "  t {:8.3} s  x {:10.3} m  angle {:7.2} deg", e.time, e.surface_x, e.angle).unwrap();
        }
        let chain: Vec<String> = self.upslope_roots.iter().map(|e| format!("{:.2}", e.surface_x)).collect();
        writeln!(out, "upslope band sequence: {} [{}]", chain.len(), chain.join(", ")).unwrap();
        writeln!(out, "snapshots:").unwrap();
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
        for m in &self.history {
            writeln!(
                out,
                "  t {:8.3} s  bands {}  conjugate {}  mean eps_pv {}  negative w2 in bands {}",
                m.time,
                m.bands.len(),
                m.conjugate,
                cell(m.mean_eps_pv),
                cell(m.negative_work_overlap)
            )
            .unwrap();
        }
        out
    }
}

/// Analyses the snapshots (in time order, at least one) and the loading
/// curve of a run.
pub fn analyse(
    manifest: &Manifest,
    snapshots: &[Snapshot],
    curve: &[crate::dynamics::CurveSample],
    opts: &ReportOptions,
) -> RunReport {
    let h = manifest.spacing;
    let (first, last) = (&snapshots[0], &snapshots[snapshots.len() - 1]);
    let history: Vec<BandMetrics> = snapshots.iter().map(|s| BandMetrics::of(s, opts)).collect();
    let detections: Vec<(f64, Vec<(f64, f64)>)> = history
        .iter()
        .map(|m| {
            let inclined = m.bands.iter().filter(|b| b.angle.abs() >= opts.min_incline);
            (m.time, inclined.map(|b| (b.surface_x, b.angle)).collect())
        })
        .collect();
    let bands = history[history.len() - 1].bands.clone();
    let band_roots = track_band_roots(&detections, opts.root_separation);
    let upslope_roots = upslope_sequence(&band_roots);
    let deformed = last.positions();
    let x_min = deformed.iter().map(|p| p[0]).fold(manifest.bounds[0][0], f64::min) - 0.5 * h;
    let x_max = deformed.iter().map(|p| p[0]).fold(manifest.bounds[1][0], f64::max) + 0.5 * h;
    let initial_profile = ground_profile(&first.positions(), h, 0.5 * h, x_min, x_max);
    let final_profile = ground_profile(&deformed, h, 0.5 * h, x_min, x_max);
    RunReport {
        scenario: manifest.scenario.clone(),
        time: last.time,
        peak: curve_peak(curve),
        horst_angle: horst_angle(&bands, opts.min_incline),
        bands,
        retrogression: retrogression_distance(&failed_surface(last, h, opts.failure_strain), manifest.crest[0]),
        oscillations: profile_oscillations(&final_profile, opts.prominence),
        band_roots,
        upslope_roots,
        history,
        initial_profile,
        final_profile,
    }
}

/// Reads a run directory, writes `ground_profile.csv` and `report.txt`
/// into it and returns the report.
pub fn report_run(dir: &Path, opts: Option<ReportOptions>) -> Result<RunReport, IoError> {
    let manifest = Manifest::read(dir)?;
    let missing = || {
        IoError::new(
            format!("reading {}", dir.display()),
            std::io::Error::new(std::io::ErrorKind::NotFound, "run has no snapshots"),
        )
    };
    if manifest.snapshots.is_empty() {
        return Err(missing());
    }
    let snapshots = manifest
        .snapshots
        .iter()
        .map(|e| read_snapshot(&dir.join(&e.file)))
        .collect::<Result<Vec<_>, _>>()?;
    let curve = read_curve(&dir.join(&manifest.loading_curve))?;
    let opts = opts.unwrap_or_else(|| ReportOptions::for_spacing(manifest.spacing));
    let report = analyse(&manifest, &snapshots, &curve, &opts);
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| IoError::new(format!("writing {}", path.display()), e))
    };
    write("ground_profile.csv", report.profile_csv())?;
    write("report.txt", report.summary())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_of_a_step() {
        let mut pts = Vec::new();
        for i in 0..4 {
            let rows = if i < 2 { 3 } else { 1 };
            for j in 0..rows {
                pts.push([0.5 + i as f64, 0.5 + j as f64]);
            }
        }
        let top: Vec<[f64; 2]> = surface_points(&pts, 1.0).into_iter().map(|i| pts[i]).collect();
        assert_eq!(top, vec![[0.5, 2.5], [1.5, 2.5], [2.5, 0.5], [3.5, 0.5]]);
    }

    #[test]
    fn median_angle() {
        let line = |angle| BandLine {
            angle,
            centroid: [0.0; 2],
            support: 10,
            length: 5.0,
            residual: 0.1,
            surface_x: 0.0,
        };
        assert_eq!(horst_angle(&[line(-60.0), line(55.0), line(70.0), line(2.0)], 20.0), Some(60.0));
        assert_eq!(horst_angle(&[line(1.0)], 20.0), None);
    }
}
