//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! The property suites run in seconds; the scenario runs take tens of
//! minutes in an optimized build. Set `PPM_ACCEPTANCE_QUICK=1` to skip the
//! scenarios and `PPM_ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ppm::scenario_io::{
    parse_scenario, read_snapshot, report_run, run_scenario, BandMetrics, Manifest, ReportOptions, RunReport, Scenario,
    Snapshot,
};
use ppm::verify::{run_all, SuiteResult};

const PEAK_TARGET: f64 = 0.1;
const PEAK_TOL: f64 = 0.03;
const OVERLAP_MIN: f64 = 0.5;
const OVERLAP_AT: f64 = 0.25;
const UPSLOPE_MIN: usize = 3;
const HORST_RANGE: (f64, f64) = (50.0, 70.0);
const OSCILLATIONS_MIN: usize = 2;
const SENSITIVITY_MIN: f64 = 0.05;
const FIELD_RETROGRESSION: f64 = 100.0;

struct Outcome {
    lines: Vec<(String, bool, String)>,
}

impl Outcome {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((id.to_string(), pass, detail));
    }

    fn info(&self, id: &str, detail: String) {
        println!("INFO {id}: {detail}");
    }
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Scenario {
    let path = scenario_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run_dir(tag: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(tag)
}

/// Runs a scenario into a fresh directory and reports it.
fn execute(scenario: &Scenario, tag: &str) -> Result<(PathBuf, RunReport), String> {
    let dir = run_dir(tag);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
    }
    let started = Instant::now();
    run_scenario(scenario, &dir, &scenario.output.plan(), None, &mut |_| {}).map_err(|e| e.to_string())?;
    let report = report_run(&dir, None).map_err(|e| e.to_string())?;
    println!("     ({tag}: {:.0} s)", started.elapsed().as_secs_f64());
    Ok((dir, report))
}

fn snapshots(dir: &Path) -> Vec<Snapshot> {
    let m = Manifest::read(dir).expect("manifest");
    m.snapshots
        .iter()
        .map(|e| read_snapshot(&dir.join(&e.file)).expect("snapshot"))
        .collect()
}

/// Every output file except the run log, whose last column is wall time.
fn products(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("run directory") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "run_log.csv") {
                let rel = path.strip_prefix(dir).expect("inside").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("readable"));
            }
        }
    }
    out
}

fn property_suites(o: &mut Outcome) {
    let results = run_all(100, 7);
    let by = |prefix: &str| -> Vec<&SuiteResult> { results.iter().filter(|r| r.name.starts_with(prefix)).collect() };
    let groups: [(&str, Vec<&SuiteResult>); 5] = [
        ("1 affine exactness", by("affine")),
        ("2 return-mapping oracle", by("return map")),
        ("3 integrator exactness", [by("free fall"), by("two-point")].concat()),
        (
            "4 equilibrium and objectivity",
            [by("uniform-stress"), by("momentum"), by("rotation")].concat(),
        ),
        ("5 zero-energy mode", by("checkerboard")),
    ];
    for (id, rs) in groups {
        let detail = rs.iter().map(|r| format!("{}: {}", r.name, r.detail)).collect::<Vec<_>>().join("; ");
        o.check(id, !rs.is_empty() && rs.iter().all(|r| r.passed), detail);
    }
}

/// Mean distance of each point's displacement from the mean of its four
/// lattice neighbours, relative to the mean displacement magnitude.
fn roughness(s: &Snapshot, spacing: f64) -> f64 {
    let key = |p: &[f64; 2]| ((p[0] / spacing).floor() as i64, (p[1] / spacing).floor() as i64);
    let index: BTreeMap<(i64, i64), usize> = s.reference.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
    let (mut dev, mut mag, mut n) = (0.0, 0.0, 0usize);
    for (i, p) in s.reference.iter().enumerate() {
        let (a, b) = key(p);
        let nb: Vec<usize> = [(a - 1, b), (a + 1, b), (a, b - 1), (a, b + 1)]
            .iter()
            .filter_map(|k| index.get(k).copied())
            .collect();
        if nb.len() < 4 {
            continue;
        }
        let mean = nb.iter().fold([0.0, 0.0], |m, &j| [m[0] + s.displacement[j][0] / 4.0, m[1] + s.displacement[j][1] / 4.0]);
        dev += (s.displacement[i][0] - mean[0]).hypot(s.displacement[i][1] - mean[1]);
        mag += s.displacement[i][0].hypot(s.displacement[i][1]);
        n += 1;
    }
    if n == 0 || mag == 0.0 {
        0.0
    } else {
        dev / mag
    }
}

fn zero_energy_documentation(o: &Outcome) {
    let unstabilized = load("biaxial_unstabilized.toml");
    let mut stabilized = unstabilized.clone();
    stabilized.name = "biaxial-quarter".into();
    stabilized.stabilization = 0.5;
    let measure = |s: &Scenario, tag: &str| -> String {
        match execute(s, tag) {
            Ok((dir, _)) => {
                let snaps = snapshots(&dir);
                let m = Manifest::read(&dir).expect("manifest");
                format!("{:.3e}", roughness(snaps.last().expect("snapshot"), m.spacing))
            }
            Err(e) => format!("run failed ({e})"),
        }
    };
    let a = measure(&stabilized, "quarter_stabilized");
    let b = measure(&unstabilized, "quarter_unstabilized");
    o.info(
        "5 zero-energy mode, quarter-scale Example 1",
        format!(
            "final displacement roughness {a} with stabilization 0.5, {b} without (documented, not asserted; fields in {})",
            run_dir("quarter_unstabilized").display()
        ),
    );
}

fn example_one(o: &mut Outcome, tag: &str) {
    let scenario = load("biaxial.toml");
    let (dir, report) = match execute(&scenario, tag) {
        Ok(r) => r,
        Err(e) => {
            o.check("6 Example 1", false, format!("run failed: {e}"));
            return;
        }
    };
    let opts = ReportOptions::for_spacing(report_spacing(&dir));
    let snaps = snapshots(&dir);
    match report.peak {
        Some(p) => o.check(
            "6a Example 1 peak",
            (p.displacement - PEAK_TARGET).abs() <= PEAK_TOL && p.post_peak_drop > 0.0,
            format!(
                "peak {:.4e} N/m at u_y = {:.4} m (target {PEAK_TARGET} +/- {PEAK_TOL} m), post-peak drop {:.1}%",
                p.reaction,
                p.displacement,
                100.0 * p.post_peak_drop
            ),
        ),
        None => o.check("6a Example 1 peak", false, "no loading curve".into()),
    }
    let last = BandMetrics::of(snaps.last().expect("snapshot"), &opts);
    let angles: Vec<String> = last.bands.iter().map(|b| format!("{:.1}", b.angle)).collect();
    o.check(
        "6b Example 1 conjugate bands",
        last.conjugate,
        format!("final bands at [{}] deg", angles.join(", ")),
    );
    o.check(
        "6c Example 1 dilation in bands",
        last.mean_eps_pv.is_some_and(|v| v > 0.0),
        format!("mean eps_pv in band mask {:?}", last.mean_eps_pv),
    );
    let u_at = |s: &Snapshot| -> f64 {
        // top displacement follows the schedule: 0.4 m per second
        0.4 * s.time
    };
    let at = snaps
        .iter()
        .min_by(|a, b| (u_at(a) - OVERLAP_AT).abs().total_cmp(&(u_at(b) - OVERLAP_AT).abs()))
        .expect("snapshot");
    let m = BandMetrics::of(at, &opts);
    o.check(
        "6d Example 1 negative second-order work in bands",
        m.negative_work_overlap.is_some_and(|f| f >= OVERLAP_MIN),
        format!(
            "fraction {:?} at u_y = {:.3} m (min {OVERLAP_MIN})",
            m.negative_work_overlap,
            u_at(at)
        ),
    );
}

fn report_spacing(dir: &Path) -> f64 {
    Manifest::read(dir).expect("manifest").spacing
}

fn example_two(o: &mut Outcome, tag: &str) -> Option<f64> {
    let scenario = load("slope.toml");
    let (_, report) = match execute(&scenario, tag) {
        Ok(r) => r,
        Err(e) => {
            o.check("7 Example 2", false, format!("run failed: {e}"));
            return None;
        }
    };
    let chain: Vec<String> = report
        .upslope_roots
        .iter()
        .map(|e| format!("x {:.1} at {:.1} s", e.surface_x, e.time))
        .collect();
    o.check(
        "7a Example 2 retrogressive bands",
        report.upslope_roots.len() >= UPSLOPE_MIN,
        format!(
            "{} successive upslope band roots (min {UPSLOPE_MIN}): [{}]",
            report.upslope_roots.len(),
            chain.join(", ")
        ),
    );
    o.check(
        "7b Example 2 horst angle",
        report.horst_angle.is_some_and(|a| a >= HORST_RANGE.0 && a <= HORST_RANGE.1),
        format!("{:?} deg (range {} - {})", report.horst_angle, HORST_RANGE.0, HORST_RANGE.1),
    );
    o.check(
        "7c Example 2 horsts and grabens",
        report.oscillations >= OSCILLATIONS_MIN,
        format!("{} oscillations of the final ground profile (min {OSCILLATIONS_MIN})", report.oscillations),
    );
    let distance = report.retrogression.map(|r| r.distance);
    o.info(
        "7 Example 2 retrogression",
        format!("{distance:?} m at desk scale (field value about {FIELD_RETROGRESSION} m, full scale is opt-in)"),
    );
    distance
}

fn sensitivity(o: &mut Outcome, tag: &str, strong: Option<f64>) {
    let scenario = load("slope_c30.toml");
    let (_, report) = match execute(&scenario, tag) {
        Ok(r) => r,
        Err(e) => {
            o.check("8 cohesion sensitivity", false, format!("run failed: {e}"));
            return;
        }
    };
    let weak = report.retrogression.map(|r| r.distance);
    let change = match (weak, strong) {
        (Some(w), Some(s)) if s.max(w) > 0.0 => Some((w - s).abs() / s.max(w)),
        _ => None,
    };
    o.check(
        "8 cohesion sensitivity",
        change.is_some_and(|c| c >= SENSITIVITY_MIN),
        format!("retrogression {weak:?} m at c0 = 30 kPa vs {strong:?} m at 35 kPa, relative change {change:?} (min {SENSITIVITY_MIN})"),
    );
}

fn main() {
    let started = Instant::now();
    let quick = std::env::var_os("PPM_ACCEPTANCE_QUICK").is_some();
    let strict = std::env::var_os("PPM_ACCEPTANCE_STRICT").is_some();
    let mut o = Outcome { lines: Vec::new() };

    property_suites(&mut o);
    if quick {
        println!("scenario criteria 6-9 skipped (PPM_ACCEPTANCE_QUICK)");
    } else {
        zero_energy_documentation(&o);
        example_one(&mut o, "biaxial_a");
        let strong = example_two(&mut o, "slope_a");
        sensitivity(&mut o, "slope_c30_a", strong);
        determinism(&mut o);
    }

    let failed = o.lines.iter().filter(|l| !l.1).count();
    println!(
        "acceptance: {} PASS, {failed} FAIL in {:.0} s",
        o.lines.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

/// Reruns the scenario criteria and compares every product byte for byte.
fn determinism(o: &mut Outcome) {
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for (file, tag) in [
        ("biaxial.toml", "biaxial"),
        ("slope.toml", "slope"),
        ("slope_c30.toml", "slope_c30"),
    ] {
        let a = run_dir(&format!("{tag}_a"));
        if !a.exists() {
            mismatched.push(format!("{tag}: first run missing"));
            continue;
        }
        let b = match execute(&load(file), &format!("{tag}_b")) {
            Ok((dir, _)) => dir,
            Err(e) => {
                mismatched.push(format!("{tag}: rerun failed ({e})"));
                continue;
            }
        };
        let (pa, pb) = (products(&a), products(&b));
        compared += pa.len();
        if pa.keys().ne(pb.keys()) {
            mismatched.push(format!("{tag}: different file sets"));
        }
        for (k, v) in &pa {
            if pb.get(k) != Some(v) {
                mismatched.push(format!("{tag}/{}", k.display()));
            }
        }
    }
    o.check(
        "9 determinism",
        mismatched.is_empty() && compared > 0,
        format!(
            "{compared} files compared across two runs at {} threads; mismatches: [{}]",
            rayon_threads(),
            mismatched.join(", ")
        ),
    );
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
