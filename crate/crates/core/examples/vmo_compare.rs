//! VMO modulus against the heat tail on the channel battery (reduced grid).
use heatlab::domains::{Domain, Grid};
use heatlab::kernels::ClosedFormKernel;
use heatlab::lp_analysis::{dyadic_range, standard_battery, vmo_vs_heat_compare};
use std::f64::consts::PI;

fn main() -> heatlab::Result<()> {
    let g = Grid::new(Domain::channel(2.0 * PI, 1.0)?, &[64, 257])?;
    let bat = standard_battery(&g, 7);
    let k = ClosedFormKernel::for_field(&bat[0].field)?;
    for row in vmo_vs_heat_compare(&k, &bat, 3.0, 0.3, &dyadic_range(2, 6))? {
        println!(
            "{:>16}: vmo {:?} heat {:?}",
            row.name, row.vmo_class, row.heat_class
        );
    }
    Ok(())
}
