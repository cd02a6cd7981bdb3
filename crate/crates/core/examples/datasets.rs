//! Synthetic instances and the fvecs, bvecs and CSV formats.
//!
//! Run with `cargo run --example datasets`.

use std::io::Cursor;

use confirm_lsh::data::{generate, load_dataset, read_csv, save_dataset, GeneratorKind, Instance, InstanceSpec};
use confirm_lsh::types::Metric;

fn main() -> confirm_lsh::error::Result<()> {
    let dir = std::env::temp_dir().join("confirm-lsh-datasets-example");
    for kind in [GeneratorKind::PlantedNn, GeneratorKind::DenseCluster, GeneratorKind::GaussianAngular] {
        let spec = InstanceSpec::default_for(kind, 300, 5, 1);
        let inst = generate(&spec)?;
        let path = dir.join(kind.to_string());
        inst.save(&path)?;
        let back = Instance::load(&path)?;
        assert_eq!(back.truth, inst.truth);
        println!("{kind}: n = {}, dim = {}, saved to {}", inst.dataset.len(), inst.dataset.dim(), path.display());
    }

    let angular = generate(&InstanceSpec::new(GeneratorKind::GaussianAngular, 10, 8, 1, 2))?;
    let file = dir.join("points.fvecs");
    save_dataset(&file, &angular.dataset)?;
    assert_eq!(load_dataset(&file, Metric::Angular)?, *angular.dataset);

    let csv = "0,1,1,0\n1,1,1,1\n0,0,0,0\n";
    let bits = read_csv(Cursor::new(csv), Metric::Hamming, false)?;
    println!("CSV gave {} Hamming points of dimension {}", bits.len(), bits.dim());
    match read_csv(Cursor::new("1,0\n1,x\n"), Metric::Hamming, false) {
        Err(e) => println!("bad input is reported: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
