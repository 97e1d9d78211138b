//! Interval Neumann kernel: image sum against eigen series, plus boundary flux.
use heatlab::domains::Bc;
use heatlab::kernels::AxisKernel;

fn main() -> heatlab::Result<()> {
    let k = AxisKernel::Interval {
        l: 1.0,
        bc: Bc::Neumann,
    };
    println!(
        "{:>8} {:>22} {:>22} {:>10}",
        "t", "images", "eigen", "dK/dn(0)"
    );
    for t in [1e-3, 1e-2, 0.1, 1.0] {
        let a = k.eval_images(t, 0.2, 0.7)?;
        let b = k.eval_eigen(t, 0.2, 0.7)?;
        println!(
            "{t:>8} {a:>22.15e} {b:>22.15e} {:>10.1e}",
            k.eval_dx(t, 0.0, 0.7)?
        );
    }
    Ok(())
}
