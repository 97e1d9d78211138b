//! Small-time parametrix for d_x^2 + c on the half-line: error against the
//! reference kernel as the td order grows, then one Volterra step.
use heatlab::parametrix::{build_parametrix, ModelOperator, ParametrixConfig};

fn main() -> heatlab::Result<()> {
    let cfg = ParametrixConfig {
        t_list: vec![0.01, 0.005],
        ..Default::default()
    };
    let op = ModelOperator::constant(-1.0);
    for (j, v) in [(0, 0), (2, 0), (4, 0), (2, 1)] {
        let (_, rep) = build_parametrix(&op, j, 0, v, &cfg)?;
        for row in &rep.rows {
            println!(
                "J_td={j} volterra={v} t={}: sup error {:.3e} ({})",
                row.t, row.sup_error, rep.reference
            );
        }
    }
    let bump = ModelOperator::bump(-1.0, 0.0, 1.0)?;
    let cfg = ParametrixConfig {
        t_list: vec![0.005],
        eval_max: 0.5,
        eval_points: 21,
        ..Default::default()
    };
    for j in [0, 2, 4] {
        let (_, rep) = build_parametrix(&bump, j, 0, 0, &cfg)?;
        println!(
            "bump potential J_td={j}: sup error {:.3e} ({})",
            rep.rows[0].sup_error, rep.reference
        );
    }
    Ok(())
}
