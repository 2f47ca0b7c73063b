//! Writes a synthetic dataset to the binary container, reads it back and
//! checks that every float survives bit for bit.

use robust_tucker::dataset::{read_dataset, write_dataset};
use robust_tucker::simulation::{gen_dataset, NoiseModel, SyntheticSpec};

fn main() -> robust_tucker::Result<()> {
    let spec = SyntheticSpec {
        dims: [4, 4, 4],
        ranks: [2, 2, 2],
        n: 100,
        noise: NoiseModel::pareto_centered(2.5, 1.0)?,
        spectrum: [1.0, 2.0],
        seed: 9,
        contamination: None,
    };
    let (samples, _) = gen_dataset(&spec)?;
    let mut buf = Vec::new();
    write_dataset(&mut buf, &samples, Some(&spec))?;
    let (back, header) = read_dataset(buf.as_slice())?;
    println!("{} bytes, header: {}", buf.len(), serde_json::to_string(&header)?);
    let same = back
        .responses()
        .iter()
        .zip(samples.responses())
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && back.design_matrix() == samples.design_matrix()
        && back.ground_truth() == samples.ground_truth();
    println!("bit-exact round trip: {same}");
    Ok(())
}
