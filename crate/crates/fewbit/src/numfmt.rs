//! Float formatting for tables: 9 significant digits, `%g` style.

pub const DIGITS: usize = 9;

/// Formats `x` with 9 significant digits, dropping trailing zeros. Uses
/// exponent notation outside `1e-4 ≤ |x| < 1e9`.
pub fn sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-4..DIGITS as i32).contains(&exp) {
        let decimals = (DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn sig_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| sig(x)).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig(0.0), "0");
        assert_eq!(sig(-6.0), "-6");
        assert_eq!(sig(1.0 / 3.0), "0.333333333");
        assert_eq!(sig(2.0f64.log2()), "1");
        assert_eq!(sig(5f64.log2()), "2.32192809");
        assert_eq!(sig(123456789.0), "123456789");
        assert_eq!(sig(1234567890.0), "1.23456789e9");
        assert_eq!(sig(0.00001234), "1.234e-5");
        assert_eq!(sig(0.0001234), "0.0001234");
        assert_eq!(sig(-2.5e-12), "-2.5e-12");
        assert_eq!(sig(0.9999999999), "1");
        assert_eq!(sig(f64::NEG_INFINITY), "-inf");
    }
}
