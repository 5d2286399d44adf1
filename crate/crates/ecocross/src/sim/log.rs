//! Trajectory recording and CSV serialization.

use crate::geometry::Route;

/// Fixed header of the trajectory CSV.
pub const CSV_HEADER: &str = "t_s,vehicle_id,route,x_m,v_mps,a_mps2,p_batt_w_per_kg";

/// One sampled vehicle state: position along its own path, speed, the
/// acceleration commanded at that instant, and battery power per unit
/// vehicle mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub id: usize,
    pub route: Route,
    pub x: f64,
    pub v: f64,
    pub a: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    /// Orders rows by time, ties by vehicle id.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
    }

    /// Rows of one vehicle, in log order.
    pub fn rows_of(&self, id: usize) -> Vec<&LogRow> {
        self.rows.iter().filter(|r| r.id == id).collect()
    }

    /// Vehicle ids present in the log, ascending.
    pub fn vehicle_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.rows.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Renders the whole log with the fixed header, six decimals, and LF
    /// line endings.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.6},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.t, r.id, r.route, r.x, r.v, r.a, r.p
            );
        }
        out
    }
}
