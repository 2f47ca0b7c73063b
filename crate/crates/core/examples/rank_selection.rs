//! Iterative rank selection from heavy-tailed data.

use robust_tucker::init::{select_rank, RankSelectConfig};
use robust_tucker::simulation::{gen_dataset, NoiseModel, SyntheticSpec};
use robust_tucker::tensor::degrees_of_freedom;

fn main() -> robust_tucker::Result<()> {
    let (dims, ranks) = ([8, 8, 8], [2, 2, 2]);
    let spec = SyntheticSpec {
        dims,
        ranks,
        n: 50 * degrees_of_freedom(dims, ranks),
        noise: NoiseModel::student_t(3.0, 1.0)?,
        spectrum: [2.0, 3.0],
        seed: 3,
        contamination: None,
    };
    let (samples, _) = gen_dataset(&spec)?;
    let sel = select_rank(&samples, &RankSelectConfig::default())?;
    for (t, it) in sel.trace.iter().enumerate() {
        match it.tau {
            Some(tau) => println!("step {t}: tau = {tau:.3}, ranks {:?}", it.ranks),
            None => println!("step {t}: untruncated, ranks {:?}", it.ranks),
        }
    }
    println!("selected {:?} (true {ranks:?}), converged {}", sel.ranks, sel.converged);
    Ok(())
}
