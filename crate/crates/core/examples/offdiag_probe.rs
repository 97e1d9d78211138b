//! Gaussian off-diagonal rate: -t log K tends to d^2/4.
use heatlab::domains::{Bc, Domain};
use heatlab::kernels::{offdiag_decay_probe, ClosedFormKernel};

fn main() -> heatlab::Result<()> {
    let cases = [
        ("free line", ClosedFormKernel::free(1), [0.0], [1.0]),
        (
            "interval",
            ClosedFormKernel::scalar(Domain::interval(1.0)?, Bc::Neumann)?,
            [0.3],
            [0.6],
        ),
        (
            "half-line",
            ClosedFormKernel::scalar(Domain::half_line(40.0)?, Bc::Dirichlet)?,
            [0.2],
            [1.0],
        ),
    ];
    for (name, k, x, y) in cases {
        let d2 = (x[0] - y[0]) * (x[0] - y[0]);
        let ts: Vec<f64> = (0..10)
            .map(|i| d2 * 4f64.powf(-1.0 - i as f64 / 2.0))
            .collect();
        let r = offdiag_decay_probe(&k, 0, &x, &y, &ts)?;
        println!(
            "{name:>10}: c = {:.6}, d^2/4 = {:.6}, gap {:.1e}",
            r.c.unwrap_or(f64::NAN),
            r.target,
            r.rel_gap.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
