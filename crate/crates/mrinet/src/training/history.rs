use std::path::Path;

use crate::data::index::atomic_write;
use crate::error::Result;

/// One completed epoch of metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Wall-clock seconds; kept out of the CSV so reports stay byte-stable.
    pub seconds: f64,
}

/// Per-epoch training record; a completed run of E epochs has exactly E rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub rows: Vec<EpochRow>,
}

/// Format with six significant digits, plain decimal notation.
pub fn fmt_sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

impl History {
    pub fn push(&mut self, row: EpochRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `epoch,train_loss,train_acc,val_loss,val_acc` with six-significant-digit
    /// decimals, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                fmt_sig6(r.train_loss),
                fmt_sig6(r.train_acc),
                fmt_sig6(r.val_loss),
                fmt_sig6(r.val_acc)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(1.6094379), "1.60944");
        assert_eq!(fmt_sig6(0.95), "0.950000");
        assert_eq!(fmt_sig6(12.3456789), "12.3457");
        assert_eq!(fmt_sig6(0.0), "0.00000");
        assert_eq!(fmt_sig6(0.0001234567), "0.000123457");
    }

    #[test]
    fn csv_has_header_and_one_row_per_epoch() {
        let mut h = History::default();
        for e in 1..=3 {
            h.push(EpochRow {
                epoch: e,
                train_loss: 1.0 / e as f64,
                train_acc: 0.5,
                val_loss: 1.1,
                val_acc: 0.4,
                seconds: 0.1,
            });
        }
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "epoch,train_loss,train_acc,val_loss,val_acc");
        assert!(lines[1].starts_with("1,1.00000,"));
        // timing must not leak into the CSV
        assert!(!csv.contains("0.1,"));
    }
}
