use std::path::{Path, PathBuf};

use stocoap::channel::ChannelMode;
use stocoap::experiments::{
    cmd_metrics, cmd_plan, cmd_simulate, gaussian_heatmap, write_index_values, ExperimentError,
    ExperimentSpec, ValueSource,
};

fn spec(out: &Path) -> ExperimentSpec {
    ExperimentSpec {
        out_dir: out.to_path_buf(),
        ..ExperimentSpec::default()
    }
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 2
}

#[test]
fn sweep_has_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let s = ExperimentSpec {
        losses: vec![0.0, 0.25, 0.5],
        ratios: vec![0.5, 1.0, 2.0],
        trials: 100,
        ..spec(dir.path())
    };
    let report = cmd_simulate(&s).unwrap();
    assert_eq!(report.rows.len(), 900);
    assert_eq!(data_rows(&dir.path().join("sim_rows.csv")), 900);
    assert_eq!(data_rows(&dir.path().join("sim_cells.csv")), 9);
    assert_eq!(data_rows(&dir.path().join("sim_blocks.csv")), 9 * 576);
    let head = std::fs::read_to_string(dir.path().join("sim_rows.csv")).unwrap();
    assert!(head.starts_with("# stocoap sim-rows v1\nloss,ratio,trial,"));
}

#[test]
fn huge_budget_fills_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let s = ExperimentSpec {
        ratios: vec![20.0],
        trials: 50,
        ..spec(dir.path())
    };
    let report = cmd_simulate(&s).unwrap();
    assert!((report.cells[0].mean_filling_rate - 1.0).abs() <= 0.01);
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = |out: &Path| ExperimentSpec {
        losses: vec![0.25, 0.5],
        ratios: vec![1.0, 2.0],
        trials: 60,
        seed: 4242,
        values: ValueSource::Gaussian,
        ..spec(out)
    };
    cmd_simulate(&base(a.path())).unwrap();
    cmd_simulate(&base(b.path())).unwrap();
    for name in ["sim_rows.csv", "sim_cells.csv", "sim_blocks.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    cmd_simulate(&ExperimentSpec { seed: 4243, ..base(c.path()) }).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("sim_rows.csv")).unwrap(),
        std::fs::read(c.path().join("sim_rows.csv")).unwrap()
    );
}

#[test]
fn per_packet_channel_follows_reassembly_model() {
    // 64 blocks, K = 2, loss 0.3. Fragments of repeated attempts combine, so
    // the block-level (1 - L)^K variant is only a lower bound.
    let dir = tempfile::tempdir().unwrap();
    let s = ExperimentSpec {
        width: 64,
        height: 64,
        packet_size: Some(32),
        channel: ChannelMode::SimPacket,
        losses: vec![0.3],
        ratios: vec![1.0],
        trials: 2000,
        values: ValueSource::Gaussian,
        sigma: 0.25,
        ..spec(dir.path())
    };
    let report = cmd_simulate(&s).unwrap();
    assert_eq!(report.cells[0].fragments_per_block, 2);
    for b in &report.blocks {
        let rho = b.analytic_reassembly;
        let tol = 4.0 * (rho * (1.0 - rho) / 2000.0).sqrt();
        assert!((b.empirical - rho).abs() <= tol, "block {}: {} vs {rho}", b.block_id, b.empirical);
        assert!(b.analytic_all_fragments < rho && rho < b.analytic);
    }
}

#[test]
fn scripted_drop_all_gives_fill_only_images() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("drops.txt");
    let all: Vec<String> = (1..=200).map(|i| i.to_string()).collect();
    std::fs::write(&script, all.join("\n")).unwrap();
    let s = ExperimentSpec {
        width: 32,
        height: 32,
        channel: ChannelMode::Scripted,
        drop_script: Some(script),
        ratios: vec![4.0],
        trials: 3,
        fill: 7,
        save_images: true,
        ..spec(dir.path())
    };
    let report = cmd_simulate(&s).unwrap();
    assert!(report.rows.iter().all(|r| r.agreement_ok && r.unique_blocks == 0));
    let mut images: Vec<PathBuf> = std::fs::read_dir(dir.path().join("images"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    images.sort();
    assert_eq!(images.len(), 3);
    for path in images {
        let bytes = std::fs::read(path).unwrap();
        let header = b"P5\n32 32\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert!(bytes[header.len()..].iter().all(|&b| b == 7));
    }
}

#[test]
fn lossy_agreement_fails_at_the_predicted_rate() {
    // Each round succeeds only if request and ACK both survive: 0.25.
    // Five rounds fail together with probability 0.75^5.
    let dir = tempfile::tempdir().unwrap();
    let trials = 1000;
    let s = ExperimentSpec {
        width: 32,
        height: 32,
        losses: vec![0.5],
        trials,
        lossy_agreement: true,
        ..spec(dir.path())
    };
    let report = cmd_simulate(&s).unwrap();
    let failures = report.cells[0].agreement_failures as f64 / trials as f64;
    let p = 0.75f64.powi(5);
    assert!((failures - p).abs() <= 4.0 * (p * (1.0 - p) / trials as f64).sqrt(), "{failures}");
    for r in report.rows.iter().filter(|r| !r.agreement_ok) {
        assert_eq!((r.unique_blocks, r.packets_sent), (0, 0));
    }
}

#[test]
fn plan_for_uniform_default_image() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_plan(&spec(dir.path())).unwrap();
    assert_eq!(out.plan.total_transmissions, 576);
    assert!(out.plan.probabilities().iter().all(|&p| p == 1.0 / 576.0));
    assert!(out.feasibility.is_none());
    let text = std::fs::read_to_string(dir.path().join("plan.txt")).unwrap();
    assert!(text.contains("transmissions = 576\n"));
    assert_eq!(data_rows(&dir.path().join("plan_blocks.csv")), 576);
}

#[test]
fn plan_from_heatmap_is_proportional() {
    let dir = tempfile::tempdir().unwrap();
    let counts = gaussian_heatmap(32, 18, 0.2, 5000);
    let values: Vec<f64> = counts.iter().map(|&c| c as f64 + 1.0).collect();
    let csv = dir.path().join("heat.csv");
    write_index_values(std::fs::File::create(&csv).unwrap(), "heatmap", "count", &values).unwrap();
    let s = ExperimentSpec {
        values: ValueSource::Heatmap(csv),
        heatmap_floor: 0.0,
        ..spec(dir.path())
    };
    let out = cmd_plan(&s).unwrap();
    let total: f64 = values.iter().sum();
    for (p, v) in out.plan.probabilities().iter().zip(&values) {
        assert!((p - v / total).abs() <= 1e-15);
    }
}

#[test]
fn infeasible_requirements_stop_the_plan() {
    // 4 blocks of 16x16 on a 32x32 image, ratio 0.5: N = 2 cannot give
    // every block 0.999.
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("req.csv");
    write_index_values(std::fs::File::create(&csv).unwrap(), "requirements", "r", &[0.999; 4]).unwrap();
    let s = ExperimentSpec {
        width: 32,
        height: 32,
        block_width: 16,
        block_height: 16,
        ratios: vec![0.5],
        values: ValueSource::Requirements(csv.clone()),
        ..spec(dir.path())
    };
    let err = cmd_plan(&s).unwrap_err();
    assert!(matches!(err, ExperimentError::Infeasible(ref r) if !r.feasible));
    assert_eq!(err.exit_code(), 1);
    let text = std::fs::read_to_string(dir.path().join("plan.txt")).unwrap();
    assert!(text.contains("feasible = false"));

    write_index_values(std::fs::File::create(&csv).unwrap(), "requirements", "r", &[0.3, 0.3, 0.0, 0.0]).unwrap();
    let ok = cmd_plan(&ExperimentSpec { ratios: vec![2.0], ..s }).unwrap();
    let report = ok.feasibility.unwrap();
    assert!(report.feasible);
    assert!(ok.plan.arrival_probs[0] >= 0.3 && ok.plan.arrival_probs[1] >= 0.3);
}

#[test]
fn audit_matches_in_run_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let s = ExperimentSpec {
        losses: vec![0.4],
        ratios: vec![1.0],
        trials: 50,
        values: ValueSource::Gaussian,
        save_images: true,
        seed: 77,
        ..spec(dir.path())
    };
    let report = cmd_simulate(&s).unwrap();
    let audit_spec = ExperimentSpec {
        image: Some(dir.path().join("original.pgm")),
        region: Some(dir.path().join("region.csv")),
        out_dir: dir.path().join("audit"),
        ..s.clone()
    };
    let rows = cmd_metrics(&audit_spec, &dir.path().join("images")).unwrap();
    assert_eq!(rows.len(), 50);
    for (audit, run) in rows.iter().zip(&report.rows) {
        assert_eq!(audit.ambiguous_blocks, 0);
        assert_eq!(audit.unique_blocks, run.unique_blocks, "{}", audit.file);
        assert_eq!(audit.pixel_filling_rate, run.pixel_filling_rate);
        assert_eq!(audit.region_coverage, run.region_coverage);
        assert_eq!(audit.full_region, run.full_region);
    }
    assert_eq!(data_rows(&dir.path().join("audit/metrics.csv")), 50);
}

#[test]
fn audit_of_complete_image_and_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let s = ExperimentSpec {
        width: 32,
        height: 32,
        trials: 1,
        save_images: true,
        ..spec(dir.path())
    };
    cmd_simulate(&s).unwrap();
    let complete = dir.path().join("complete");
    std::fs::create_dir(&complete).unwrap();
    std::fs::copy(dir.path().join("original.pgm"), complete.join("full.pgm")).unwrap();
    let audit = ExperimentSpec {
        image: Some(dir.path().join("original.pgm")),
        ..s.clone()
    };
    let rows = cmd_metrics(&audit, &complete).unwrap();
    assert_eq!(rows[0].pixel_filling_rate, 1.0);
    assert!(rows[0].full_region);

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert!(cmd_metrics(&audit, &empty).is_err());
    assert!(cmd_metrics(&audit, &dir.path().join("missing")).is_err());
}
