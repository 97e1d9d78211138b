//! Heat Besov norm in integral and dyadic form for a few battery fields.
use heatlab::domains::{Domain, Grid};
use heatlab::kernels::ClosedFormKernel;
use heatlab::lp_analysis::{besov_heat_norm, standard_battery, BesovQ};

fn main() -> heatlab::Result<()> {
    let g = Grid::new(Domain::interval(1.0)?, &[2049])?;
    let bat = standard_battery(&g, 10);
    let k = ClosedFormKernel::for_field(&bat[0].field)?;
    for b in bat.iter().filter(|b| b.name != "constant") {
        for q in [BesovQ::One, BesovQ::Infinity] {
            let r = besov_heat_norm(&k, &b.field, 0.3, 3.0, q, 128.0)?;
            println!(
                "{:>16} q={q:?}: integral {:.4e} dyadic {:.4e} ratio {:.3}",
                b.name, r.integral, r.dyadic, r.ratio
            );
        }
    }
    Ok(())
}
