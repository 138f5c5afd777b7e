use std::io::{self, Write};

use super::Trajectory;

pub const CSV_FORMAT_VERSION: u32 = 1;

/// Writes `t,x_1,y_1,...,x_N,y_N,rho,h,u,frozen` rows with 17 significant
/// digits, preceded by `#` lines carrying the format version and the
/// resolved config as one-line JSON. `n` is the number of oscillators, so
/// that an empty (failed) trajectory still gets the full header.
pub fn write_csv<W: Write>(
    traj: &Trajectory,
    n: usize,
    config_json: &str,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "# format_version: {CSV_FORMAT_VERSION}")?;
    writeln!(w, "# config: {config_json}")?;
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",x_{i},y_{i}"));
    }
    header.push_str(",rho,h,u,frozen");
    writeln!(w, "{header}")?;
    for k in 0..traj.len() {
        let mut line = num(traj.times[k]);
        for v in &traj.states[k] {
            line.push(',');
            line.push_str(&num(*v));
        }
        for v in [traj.rho_values[k], traj.h_values[k], traj.controls[k]] {
            line.push(',');
            line.push_str(&num(v));
        }
        line.push_str(if traj.is_frozen(k) { ",1" } else { ",0" });
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_marks_freeze() {
        let traj = Trajectory {
            dt: 0.1,
            times: vec![0.0, 0.1],
            states: vec![vec![1.0 / 3.0, -2.0], vec![0.1, 0.2]],
            controls: vec![-0.5, 0.0],
            rho_values: vec![2.0, 0.005],
            h_values: vec![0.3, 0.1],
            frozen_from: Some(1),
        };
        let mut buf = Vec::new();
        write_csv(&traj, traj.states[0].len() / 2, "{}", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "t,x_1,y_1,rho,h,u,frozen");
        let first: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(first[1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert!(lines[3].ends_with(",0") && lines[4].ends_with(",1"));
    }
}
