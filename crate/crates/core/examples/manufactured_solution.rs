//! Convergence of the constant-coefficient solver on the decaying cosine
//! mode `exp(-k pi^2 t) cos(pi x)`.

use stefan_mushy::manufactured::{cosine_mode_error, observed_order};

fn main() -> stefan_mushy::Result<()> {
    let (k, horizon) = (2.0, 0.1);
    let cells = [32usize, 64, 128, 256];
    let mut errors = Vec::new();
    println!("space refinement, dt ~ h^2");
    for &n in &cells {
        let e = cosine_mode_error(1.0, n, horizon, n * n / 32, k)?;
        println!("  cells {n:>4}  error {e:.3e}");
        errors.push(e);
    }
    println!("  order {:.3}", observed_order(&cells.map(|n| 1.0 / n as f64), &errors));

    let steps = [16usize, 32, 64, 128];
    let errors: Vec<f64> = steps.iter().map(|&n| cosine_mode_error(1.0, 1024, horizon, n, k)).collect::<Result<_, _>>()?;
    println!("time refinement, 1024 cells");
    for (n, e) in steps.iter().zip(&errors) {
        println!("  steps {n:>4}  error {e:.3e}");
    }
    println!("  order {:.3}", observed_order(&steps.map(|n| horizon / n as f64), &errors));
    Ok(())
}
