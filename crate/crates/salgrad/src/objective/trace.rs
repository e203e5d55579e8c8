//! Per-iteration optimization records.

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub loss_sal: f64,
    pub loss_sim: f64,
    pub tv: f64,
    pub total: f64,
    pub mask_mean_saliency: f64,
}

/// The run history, one row per evaluated iterate (iteration 0 included).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first(&self) -> Option<&TraceRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Plain-text comma-separated serialization with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loss_sal,loss_sim,tv,total,mask_mean_saliency\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iter, r.loss_sal, r.loss_sim, r.tv, r.total, r.mask_mean_saliency
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let mut t = Trace::new();
        t.push(TraceRow { iter: 0, loss_sal: 0.5, loss_sim: 0.0, tv: 0.0, total: 0.5, mask_mean_saliency: 0.8 });
        t.push(TraceRow { iter: 1, loss_sal: 0.25, loss_sim: 0.01, tv: 0.2, total: 0.37, mask_mean_saliency: 0.6 });
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "iter,loss_sal,loss_sim,tv,total,mask_mean_saliency");
        assert!(lines[1].starts_with("0,0.5,0,"));
    }
}
