use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use sideband_core::config::{parse_config, SweepParameter};
use sideband_core::harness::{execute_campaign, list_presets, preset_config, preset_text, run_campaign, RecordFormat};
use sideband_core::{CountRecord, Manifest};

fn walk(dir: &Path, root: &Path, out: &mut BTreeSet<String>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            walk(&path, root, out);
        } else {
            out.insert(path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
}

#[test]
fn catalog_has_exactly_the_ten_presets() {
    let names: Vec<&str> = list_presets().iter().map(|p| p.name).collect();
    assert_eq!(
        names,
        [
            "fig1d",
            "fig1e",
            "fig3a",
            "fig3b",
            "fig4a",
            "fig4b",
            "fig4c",
            "fig4d",
            "supp-fig7",
            "supp-fig8"
        ]
    );
    assert!(list_presets()
        .iter()
        .all(|p| !p.description.is_empty() && !p.description.contains('\n')));
}

#[test]
fn gap_preset_spans_one_to_ninety_six_microseconds() {
    let c = preset_config("supp-fig8").unwrap();
    let sweep = c.sweep.unwrap();
    assert_eq!(sweep.parameter, SweepParameter::GapS);
    assert_eq!(sweep.values.first(), Some(&1e-6));
    assert_eq!(sweep.values.last(), Some(&96e-6));
    let plan = c.plan.unwrap();
    assert!(plan.sequence.pulses().all(|(_, p)| (p.power - 340e-9).abs() < 1e-15));
}

#[test]
fn manifest_lists_every_file_with_its_digest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_campaign(&preset_config("fig4d").unwrap(), dir.path(), RecordFormat::Csv).unwrap();
    let mut on_disk = BTreeSet::new();
    walk(dir.path(), dir.path(), &mut on_disk);
    on_disk.remove("manifest.json");
    let listed: BTreeSet<String> = out.manifest.files.iter().map(|f| f.path.clone()).collect();
    assert_eq!(on_disk, listed);
    let manifest = Manifest::from_json(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest, out.manifest);
    assert!(manifest.verify(dir.path()).unwrap().is_empty());

    fs::write(dir.path().join("sweep.csv"), "tampered\n").unwrap();
    assert_eq!(manifest.verify(dir.path()).unwrap(), vec!["sweep.csv".to_string()]);
}

#[test]
fn failing_analysis_is_recorded_and_the_rest_still_run() {
    // A power law needs a power sweep; this campaign sweeps the gap.
    let text = preset_text("supp-fig8").unwrap().replace(
        "analyses = [\"occupancy\"]",
        "analyses = [\"power-law\", \"occupancy\"]",
    );
    let out = execute_campaign(&parse_config(&text).unwrap(), RecordFormat::Csv).unwrap();
    let status = &out.manifest.analyses;
    assert_eq!(status.len(), 2);
    assert!(!status[0].ok && status[0].error.as_deref().unwrap().contains("power_w"));
    assert!(status[1].ok && status[1].error.is_none());
    assert_eq!(out.results.occupancy.len(), 8);
    assert!(out.files.iter().all(|(p, _)| p != "power_law.json"));
}

#[test]
fn seed_changes_the_data_but_not_the_config_shape() {
    let base = preset_config("fig4a").unwrap();
    let a = execute_campaign(&base, RecordFormat::Csv).unwrap();
    let b = execute_campaign(&base.clone().with_seed(7), RecordFormat::Csv).unwrap();
    assert_eq!(b.manifest.seed, 7);
    assert_ne!(a.manifest.config_digest, b.manifest.config_digest);
    let counts =
        |o: &sideband_core::harness::CampaignOutput| o.files.iter().find(|(p, _)| p == "counts.csv").unwrap().1.clone();
    assert_ne!(counts(&a), counts(&b));
}

#[test]
fn json_records_round_trip() {
    let out = execute_campaign(&preset_config("fig4a").unwrap(), RecordFormat::Json).unwrap();
    let (_, body) = out.files.iter().find(|(p, _)| p == "counts.json").unwrap();
    let record = CountRecord::from_json(body).unwrap();
    let csv = execute_campaign(&preset_config("fig4a").unwrap(), RecordFormat::Csv).unwrap();
    let (_, body) = csv.files.iter().find(|(p, _)| p == "counts.csv").unwrap();
    assert_eq!(record, CountRecord::from_csv(body).unwrap());
}

#[test]
fn occupancy_table_reports_truth_alongside_the_estimate() {
    let out = execute_campaign(&preset_config("fig4a").unwrap(), RecordFormat::Csv).unwrap();
    let row = &out.results.occupancy[0];
    assert!((row.model_n_b.unwrap() - 0.66).abs() < 1e-3);
    assert!(row.estimate.ci_low < row.estimate.n_b && row.estimate.n_b < row.estimate.ci_high);
    let (_, table) = out.files.iter().find(|(p, _)| p == "occupancy.csv").unwrap();
    let mut lines = table.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("dataset,point,value,method,n_b,ci_low,ci_high"));
    assert_eq!(lines.count(), 1);
}

#[test]
fn spectrum_campaigns_write_data_fit_and_residuals() {
    let out = execute_campaign(&preset_config("fig1e").unwrap(), RecordFormat::Csv).unwrap();
    let names: Vec<&str> = out.files.iter().map(|(p, _)| p.as_str()).collect();
    assert_eq!(
        names,
        ["spectrum.txt", "mechanical_fit.json", "mechanical_fit_residuals.csv"]
    );
    let spectrum = sideband_core::Spectrum::parse(&out.files[0].1).unwrap();
    assert_eq!(spectrum.len(), 601);
}
