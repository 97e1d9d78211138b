//! Three tail conditions side by side on the interval battery.
use heatlab::domains::{Domain, Grid};
use heatlab::kernels::ClosedFormKernel;
use heatlab::lp_analysis::{dyadic_range, standard_battery, tail_slope, vanishing_diagnostic};

fn main() -> heatlab::Result<()> {
    let g = Grid::new(Domain::interval(1.0)?, &[2049])?;
    let bat = standard_battery(&g, 10);
    let k = ClosedFormKernel::for_field(&bat[0].field)?;
    for b in &bat {
        let v = vanishing_diagnostic(&k, &b.field, 3.0, 0.2, &dyadic_range(3, 8))?;
        let slopes: Vec<String> = v
            .tails
            .iter()
            .map(|t| tail_slope(&t.values).map_or("-".into(), |s| format!("{s:+.2}")))
            .collect();
        println!(
            "{:>16}: {:?} (agree {}) slopes {}",
            b.name,
            v.classification,
            v.agree,
            slopes.join(" ")
        );
    }
    Ok(())
}
