//! Commutator of heat flow with multiplication by a smooth interior cutoff.
use heatlab::domains::{Domain, Field, Grid};
use heatlab::kernels::ClosedFormKernel;
use heatlab::lp_analysis::{dyadic_range, pointwise_multiplier_check, standard_battery};
use heatlab::onsager_lab::smooth_step;

fn main() -> heatlab::Result<()> {
    let g = Grid::new(Domain::interval(1.0)?, &[2049])?;
    let bat = standard_battery(&g, 10);
    let k = ClosedFormKernel::for_field(&bat[0].field)?;
    let r = 0.2;
    let cut = Field::scalar_fn(&g, |p| {
        smooth_step((g.domain.dist_to_boundary(p) - r / 2.0) / (r / 4.0))
    });
    let s: Vec<f64> = (1..=8).map(|i| 4f64.powi(-i)).collect();
    for b in &bat {
        let m = pointwise_multiplier_check(&k, &cut, &b.field, 3.0, r, &s, &dyadic_range(3, 8))?;
        println!(
            "{:>16}: C = {:.3}, decreasing {}, last scaled {:.2e}",
            b.name,
            m.c_max,
            m.decreasing,
            m.scaled[m.scaled.len() - 1]
        );
    }
    Ok(())
}
