use std::path::{Path, PathBuf};
use std::process::Command;

use l2s_bench::diag::{run_diagnostics, DiagOptions};
use l2s_bench::experiment::{run_experiment, RunOptions};
use l2s_bench::plot::{collect_trace_files, load_series, render_svg, Metric, PlotStyle};
use l2s_bench::records::{read_csv, SummaryRecord, TraceRecord, SUMMARY_SCHEMA, TRACE_SCHEMA};
use l2s_bench::spec::ExperimentSpec;
use l2s_bench::study::{run_study, StudySpec};
use l2s_bench::BenchError;

const SC_SPEC: &str = r#"
name = "sc"
passes = 30
record_every = 1.0
seeds = [0, 1]

[dataset]
kind = "synthetic"
n = 300
d = 10
spread = 1.0
noise = 0.1
seed = 3

[loss]
kind = "logistic"
lambda = 0.05

[[optimizer]]
algorithm = "sarah"
m = "n"
eta_over_l = [0.5]

[[optimizer]]
algorithm = "l2s-sc"
m = "n"
eta_over_l = [0.5]
"#;

fn spec(text: &str) -> ExperimentSpec {
    ExperimentSpec::from_toml(text, Path::new("inline.toml")).unwrap()
}

fn run_in(text: &str, dir: &Path) -> l2s_bench::Result<l2s_bench::experiment::ExperimentReport> {
    run_experiment(
        &spec(text),
        Path::new("."),
        &RunOptions {
            out_dir: Some(dir.to_path_buf()),
            workers: Some(2),
            ..RunOptions::default()
        },
    )
}

fn traces(dir: &Path) -> Vec<(PathBuf, Vec<TraceRecord>)> {
    collect_trace_files(&[dir.to_path_buf()])
        .unwrap()
        .into_iter()
        .map(|f| {
            let rows = read_csv(&f, TRACE_SCHEMA).unwrap();
            (f, rows)
        })
        .collect()
}

#[test]
fn strongly_convex_pair_reaches_tolerance_with_one_row_per_pass() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_in(SC_SPEC, dir.path()).unwrap();
    assert_eq!(report.summary.len(), 4);
    let files = traces(dir.path());
    assert_eq!(files.len(), 4);
    for (f, rows) in &files {
        assert_eq!(rows.len(), 31, "{}", f.display());
        assert!(rows.last().unwrap().grad_norm_sq <= 1e-8, "{}", f.display());
        assert!(rows.windows(2).all(|w| w[0].passes <= w[1].passes));
    }
}

#[test]
fn summary_ifo_matches_trace_rows() {
    let dir = tempfile::tempdir().unwrap();
    run_in(SC_SPEC, dir.path()).unwrap();
    let summary: Vec<SummaryRecord> = read_csv(&dir.path().join("summary.csv"), SUMMARY_SCHEMA).unwrap();
    for row in summary {
        let file = dir.path().join(row.trace_file.unwrap());
        let rows: Vec<TraceRecord> = read_csv(&file, TRACE_SCHEMA).unwrap();
        assert_eq!(row.ifo, Some(rows.last().unwrap().ifo));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_in(SC_SPEC, a.path()).unwrap();
    let one_worker = run_experiment(
        &spec(SC_SPEC),
        Path::new("."),
        &RunOptions {
            out_dir: Some(b.path().to_path_buf()),
            workers: Some(1),
            ..RunOptions::default()
        },
    );
    one_worker.unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for name in names {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name:?}");
    }
    assert!(a.path().join("metadata.json").exists());
}

#[test]
fn best_step_is_the_argmin_of_final_gradient_norm() {
    let text = SC_SPEC
        .replace("passes = 30", "passes = 5")
        .replace("eta_over_l = [0.5]", "eta_over_l = [0.1, 0.3, 0.5, 0.7, 0.95]");
    let dir = tempfile::tempdir().unwrap();
    let report = run_in(&text, dir.path()).unwrap();
    assert_eq!(report.summary.len(), 2 * 5 * 2);
    for best in &report.best {
        let mut by_eta: Vec<(f64, f64)> = Vec::new();
        for row in report.summary.iter().filter(|r| r.algorithm == best.algorithm) {
            let g = row.final_grad_norm_sq.unwrap();
            match by_eta.iter_mut().find(|e| e.0 == row.eta) {
                Some(e) => e.1 += g / 2.0,
                None => by_eta.push((row.eta, g / 2.0)),
            }
        }
        let argmin = by_eta.iter().min_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
        assert_eq!(best.eta, argmin.0, "{}", best.algorithm);
        assert_eq!(best.seeds, 2);
    }
}

#[test]
fn empty_optimizer_list_is_a_config_error() {
    let text = r#"
        name = "empty"
        passes = 3
        [dataset]
        kind = "synthetic"
        n = 10
        d = 2
        [loss]
        kind = "logistic"
    "#;
    let err = ExperimentSpec::from_toml(text, Path::new("x.toml")).unwrap_err();
    assert!(matches!(err, BenchError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn diverged_cells_are_recorded_not_fatal() {
    let text = SC_SPEC
        .replace("eta_over_l = [0.5]\n\n[[optimizer]]", "eta = 1e9\n\n[[optimizer]]")
        .replace("seeds = [0, 1]", "seeds = [0]");
    let dir = tempfile::tempdir().unwrap();
    let report = run_in(&text, dir.path()).unwrap();
    assert_eq!(report.diverged, 1);
    let bad = report.summary.iter().find(|r| r.status == "diverged").unwrap();
    assert_eq!(bad.algorithm, "sarah");
    assert!(bad.note.contains("diverged"));
    assert_eq!(report.best.len(), 1);
    assert_eq!(report.best[0].algorithm, "l2s-sc");
}

#[test]
fn missing_dataset_names_the_download_page() {
    let text = SC_SPEC.replace(
        "kind = \"synthetic\"\nn = 300\nd = 10\nspread = 1.0\nnoise = 0.1\nseed = 3",
        "kind = \"libsvm\"\npath = \"definitely-missing.svm\"",
    );
    let dir = tempfile::tempdir().unwrap();
    let err = run_in(&text, dir.path()).unwrap_err();
    assert!(matches!(err, BenchError::MissingDataset { .. }), "{err}");
    assert!(err.to_string().contains("libsvmtools"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn plot_has_one_series_and_legend_per_algorithm() {
    let text = SC_SPEC
        .replace("seeds = [0, 1]", "seeds = [0]")
        .replace("passes = 30", "passes = 4")
        + r#"
[[optimizer]]
algorithm = "svrg"
m = "n"
eta_over_l = [0.2]

[[optimizer]]
algorithm = "gd"
eta_over_l = [0.9]
"#;
    let dir = tempfile::tempdir().unwrap();
    run_in(&text, dir.path()).unwrap();
    let files = collect_trace_files(&[dir.path().to_path_buf()]).unwrap();
    assert_eq!(files.len(), 4);
    let series = load_series(&files, Metric::GradNorm).unwrap();
    let svg = render_svg(&series, &PlotStyle::default()).unwrap();
    assert_eq!(svg.matches("class=\"series\"").count(), 4);
    for name in ["gd", "sarah", "svrg", "l2s-sc"] {
        assert!(svg.contains(&format!(">{name}</text>")), "missing legend {name}");
    }
    assert!(svg.contains("class=\"xlabel\"") && svg.contains("class=\"ylabel\""));

    let single = load_series(&files[..1], Metric::Suboptimality).unwrap();
    let svg = render_svg(&single, &PlotStyle::default()).unwrap();
    assert!(svg.matches("class=\"series\"").count() >= 1);
}

fn study_spec(sizes: &[usize]) -> StudySpec {
    let text = format!(
        r#"
        name = "study"
        sizes = {sizes:?}
        passes = 10
        seeds = [0, 1, 2]
        [dataset]
        kind = "synthetic"
        n = 1000
        d = 10
        noise = 0.1
        seed = 9
        [loss]
        kind = "logistic"
        lambda = 0.0
    "#
    );
    let spec: StudySpec = toml::from_str(&text).unwrap();
    spec.validate().unwrap();
    spec
}

#[test]
fn study_on_full_set_has_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_study(&study_spec(&[1000]), Path::new("."), None, Some(2), Some(dir.path().into())).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.csv.exists());
}

#[test]
fn study_gap_shrinks_with_subset_size() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_study(&study_spec(&[10, 100, 1000]), Path::new("."), None, None, Some(dir.path().into())).unwrap();
    let dependent: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.config == "n-dependent")
        .map(|r| r.mean_final_grad_norm_sq)
        .collect();
    assert!(dependent.windows(2).all(|w| w[1] < w[0]), "{dependent:?}");
    let gap_small = report.gaps[0].1;
    let gap_large = report.gaps[2].1;
    assert!(gap_large < gap_small, "{:?}", report.gaps);
}

#[test]
fn study_rejects_oversized_subsets() {
    let err = run_study(&study_spec(&[2000]), Path::new("."), None, None, None).unwrap_err();
    assert!(matches!(err, BenchError::Config(_)));
}

#[test]
fn diagnostics_suite_passes() {
    let report = run_diagnostics(&DiagOptions {
        resamples: 500,
        ..DiagOptions::default()
    })
    .unwrap();
    assert!(report.passed, "{}", report.render());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_l2s-bench"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\npasses = 0\n").unwrap();
    let out = bin().args(["run", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let diverging = dir.path().join("div.toml");
    let text = SC_SPEC
        .replace("eta_over_l = [0.5]\n\n[[optimizer]]", "eta = 1e9\n\n[[optimizer]]")
        .replace("seeds = [0, 1]", "seeds = [0]")
        .replace("passes = 30", "passes = 2");
    std::fs::write(&diverging, text).unwrap();
    let out_dir = dir.path().join("out");
    let run = |strict: bool| {
        let mut cmd = bin();
        cmd.args(["run", diverging.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--workers", "1"]);
        if strict {
            cmd.arg("--strict");
        }
        cmd.output().unwrap()
    };
    assert_eq!(run(false).status.code(), Some(0));
    assert_eq!(run(true).status.code(), Some(3));

    let svg = dir.path().join("fig.svg");
    let out = bin()
        .args(["plot", out_dir.to_str().unwrap(), "--out", svg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let empty = dir.path().join("nothing");
    std::fs::create_dir_all(&empty).unwrap();
    let out = bin().args(["plot", empty.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap().to_string_lossy().contains("study") {
            StudySpec::load(&path).unwrap();
        } else {
            ExperimentSpec::load(&path).unwrap();
        }
        count += 1;
    }
    assert_eq!(count, 4);
}
