//! Minimal inescapable ellipsoid of `ẋ = −x + w`, `z = x`, `|w| ≤ 1`.
//!
//! For a constant `α` the periodic solution is `P = 1/(α(2 − α))`, which is
//! smallest at `α = 1`. The iteration recovers that from `α₀ = 0.3`.

use inescapable::ellipsoid::{optimize_alpha_analysis, size_dual, AlphaOptions};
use inescapable::ode::OdeSettings;
use inescapable::signal::{AlphaProfile, PeriodicMatrixSignal};
use nalgebra::DMatrix;

fn main() -> inescapable::Result<()> {
    let scalar = |v: f64| PeriodicMatrixSignal::constant(&DMatrix::from_element(1, 1, v), 1.0);
    let (a, b, c) = (scalar(-1.0), scalar(1.0), scalar(1.0));
    let options = AlphaOptions {
        ode: OdeSettings::new(64, 4)?,
        ..Default::default()
    };
    let alpha0 = AlphaProfile::constant(0.3, 1.0, 64)?;
    let opt = optimize_alpha_analysis(&a, &b, &c, &alpha0, &options)?;

    for (k, s) in opt.history.sizes.iter().enumerate() {
        println!("iteration {k:2}  size {s:.12}");
    }
    println!("alpha* in [{:.9}, {:.9}]", opt.alpha.inf(), opt.alpha.sup());
    println!("size (primal) {:.12}", opt.size);
    println!("size (dual)   {:.12}", size_dual(&b, &opt.q)?);
    println!("stationarity residual {:.2e}", opt.stationarity);
    Ok(())
}
