//! Sparse CSV export of belief slices.

use std::fmt::Write as _;

use crate::mdp::{ActionId, StateId};

pub const CSV_HEADER: &str = "s,a,s_next,a_next,value";
pub const CSV_THRESHOLD: f64 = 1e-12;

/// One row per entry of `slice` (indexed `(s', a')`) with magnitude above
/// [`CSV_THRESHOLD`]. LF line endings, header first.
pub fn slice_csv(state: StateId, action: ActionId, num_actions: usize, slice: &[f64]) -> String {
    let mut out = String::with_capacity(64 + slice.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    append_rows(&mut out, state, action, num_actions, slice);
    out
}

/// Every `(s, a)` slice of a full row-major tensor.
pub fn tensor_csv(num_states: usize, num_actions: usize, values: &[f64]) -> String {
    let n = num_states * num_actions;
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (row, slice) in values.chunks(n).enumerate() {
        append_rows(&mut out, row / num_actions, row % num_actions, num_actions, slice);
    }
    out
}

fn append_rows(out: &mut String, s: StateId, a: ActionId, num_actions: usize, slice: &[f64]) {
    for (j, &v) in slice.iter().enumerate() {
        if v.abs() > CSV_THRESHOLD {
            writeln!(out, "{s},{a},{},{},{v}", j / num_actions, j % num_actions).expect("string write");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_rows_only() {
        let csv = slice_csv(3, 1, 2, &[0.0, 1e-13, 0.5, -2.0]);
        assert_eq!(csv, "s,a,s_next,a_next,value\n3,1,1,0,0.5\n3,1,1,1,-2\n");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn full_tensor_rows_carry_their_pair() {
        let mut v = vec![0.0; 16];
        v[4 * 3 + 2] = 1.25;
        assert_eq!(tensor_csv(2, 2, &v), "s,a,s_next,a_next,value\n1,1,1,0,1.25\n");
        assert_eq!(tensor_csv(2, 2, &[0.0; 16]), "s,a,s_next,a_next,value\n");
    }
}
