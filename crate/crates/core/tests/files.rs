//! File-backed round trips for the on-disk formats.

use std::fs;

use lw_core::data::{self, load_idx, load_partial_csv, make_gaussian_task, save_partial_csv};
use lw_core::labelgen::GenerationModel;
use lw_core::model::Network;
use lw_core::Dataset;

#[test]
fn partial_csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.csv");
    let ds: Dataset = make_gaussian_task(4, 3, 200, 2.0, 1.0, 1).unwrap();
    let masks = GenerationModel::uniform(4, 0.4)
        .unwrap()
        .sample_corpus(ds.true_labels().unwrap(), 1)
        .unwrap();
    let ds = ds.with_partial_masks(masks).unwrap();
    save_partial_csv(&ds, &path).unwrap();
    let back: Dataset = load_partial_csv(&path, Some(4)).unwrap();
    assert_eq!(back, ds);
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("f0,f1,f2,candidates,true_label\n"));
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let net = Network::<f64>::mlp(7, &[4, 4], 3).unwrap().initialized(5);
    net.write_checkpoint(fs::File::create(&path).unwrap()).unwrap();
    let back = Network::<f64>::read_checkpoint(fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, net);
}

#[test]
fn idx_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let ds: Dataset = Dataset::new(vec![0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.6, 0.8], 4, 2, Some(vec![1, 0]), None).unwrap();
    let (img, lab) = data::encode_idx(&ds, 2, 2).unwrap();
    let (ip, lp) = (dir.path().join("images.idx"), dir.path().join("labels.idx"));
    fs::write(&ip, &img).unwrap();
    fs::write(&lp, &lab).unwrap();
    let back: Dataset = load_idx(&ip, &lp).unwrap();
    assert_eq!(back, ds);
    fs::write(&lp, &lab[..lab.len() - 1]).unwrap();
    assert!(load_idx::<f64>(&ip, &lp).is_err());
}
