//! CSV output helpers shared by the reports.

/// Format like C's `%.12g`.
pub fn fmt_g(v: f64) -> String {
    fmt_g_prec(v, 12)
}

pub fn fmt_g_prec(v: f64, prec: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let prec = prec.max(1);
    // exponent after rounding to `prec` significant digits
    let sci = format!("{:.*e}", prec - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= prec as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (prec as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Minimal CSV table builder: header row, LF endings, `%.12g` numbers.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    out: String,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut out = header.join(",");
        out.push('\n');
        CsvTable { out }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        let parts: Vec<String> = cells.iter().map(Cell::render).collect();
        self.out.push_str(&parts.join(","));
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Cell<'a> {
    Num(f64),
    Int(i64),
    Text(&'a str),
    Bool(bool),
}

impl Cell<'_> {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_g(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.to_string()
                }
            }
            Cell::Bool(b) => b.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(0.5), "0.5");
        assert_eq!(fmt_g(-2.25), "-2.25");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(123456789012.0), "123456789012");
        assert_eq!(fmt_g(1234567890123.0), "1.23456789012e+12");
        assert_eq!(fmt_g(1e-5), "1e-05");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(2.0f64.sqrt() * 1e-7), "1.41421356237e-07");
        assert_eq!(fmt_g(999999999999.9), "1e+12");
    }

    #[test]
    fn table_quotes_text() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.row(&[Cell::Text("x,y"), Cell::Num(1.5)]);
        assert_eq!(t.finish(), "a,b\n\"x,y\",1.5\n");
    }
}
