//! Saves a trained network to the stable binary checkpoint format and loads
//! it back, verifying the roundtrip bit for bit.

use ndarray::Array2;
use pcflow::{forward, init_network, load_network, save_network, Activation, RngSeed};

fn main() -> pcflow::Result<()> {
    let network = init_network::<f64>(&[6, 12, 3], Activation::LeakyRelu { slope: 0.1 }, RngSeed(9))?;
    let dir = std::env::temp_dir();
    let path = dir.join("pcflow_example_checkpoint.pcflow");

    save_network(&network, &path)?;
    let loaded = load_network::<f64>(&path)?;
    assert_eq!(network, loaded, "roundtrip must be bit-exact");

    let x = Array2::from_shape_fn((4, 6), |(i, j)| ((i + j) as f64 * 0.3).sin());
    let before = forward(&network, &x)?;
    let after = forward(&loaded, &x)?;
    assert_eq!(before, after);

    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!(
        "saved {:?} network ({} layers) to {} ({bytes} bytes) and loaded it back bit-exact",
        loaded.dims(),
        loaded.num_layers(),
        path.display()
    );
    std::fs::remove_file(&path).ok();
    Ok(())
}
