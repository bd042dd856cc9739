//! CSV writing: header plus rows, fixed 6-decimal formatting, `\n` line
//! endings, UTF-8.

use std::path::Path;

/// One CSV cell: either text or a number rendered with 6 decimals.
#[derive(Debug, Clone)]
pub enum Cell {
    Text(String),
    Number(f64),
    Integer(i64),
    Flag(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Number(v) => format!("{v:.6}"),
            Cell::Integer(v) => v.to_string(),
            Cell::Flag(b) => if *b { "pass" } else { "fail" }.to_string(),
        }
    }
}

pub fn text(s: impl Into<String>) -> Cell {
    Cell::Text(s.into())
}

pub fn num(v: f64) -> Cell {
    Cell::Number(v)
}

pub fn int(v: i64) -> Cell {
    Cell::Integer(v)
}

pub fn flag(b: bool) -> Cell {
    Cell::Flag(b)
}

pub fn render_csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> std::io::Result<()> {
    std::fs::write(path, render_csv(header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_rows_give_header_only() {
        let csv = render_csv(&["a", "b"], &[]);
        assert_eq!(csv, "a,b\n");
    }

    #[test]
    fn numbers_use_six_decimals() {
        let csv = render_csv(
            &["dataset", "h", "nll"],
            &[vec![text("checkerboard"), num(-1.0), num(-0.8123456789)]],
        );
        assert_eq!(csv, "dataset,h,nll\ncheckerboard,-1.000000,-0.812346\n");
    }

    #[test]
    fn rendering_is_deterministic() {
        let rows = vec![vec![text("x"), num(0.1), int(7), flag(true)]];
        let a = render_csv(&["a", "b", "c", "d"], &rows);
        let b = render_csv(&["a", "b", "c", "d"], &rows);
        assert_eq!(a, b);
    }
}
