//! CSV output helpers. All numeric columns are written with a fixed
//! 17-significant-digit scientific format so repeated runs diff cleanly
//! byte for byte.

use std::io::{self, Write};

/// Render a float with 17 significant digits, round-trip safe for f64.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write one CSV row of floats after optional leading fields.
pub fn write_row<W: Write>(w: &mut W, lead: &[&str], values: &[f64]) -> io::Result<()> {
    let mut first = true;
    for s in lead {
        if !first {
            write!(w, ",")?;
        }
        write!(w, "{s}")?;
        first = false;
    }
    for v in values {
        if !first {
            write!(w, ",")?;
        }
        write!(w, "{}", fmt_g17(*v))?;
        first = false;
    }
    writeln!(w)
}
