//! Number formatting for CSV and report output.

/// Formats with 6 significant digits, the serialization precision used by
/// every CSV except the value-table reproduction.
pub(crate) fn sig6(x: f64) -> String {
    significant(x, 6)
}

pub(crate) fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    let exponent = x.abs().log10().floor() as i32;
    if exponent < -4 || exponent >= digits as i32 {
        format!("{:.*e}", digits - 1, x)
    } else {
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        format!("{x:.decimals$}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.05), "0.0500000");
        assert_eq!(sig6(1.3533333333), "1.35333");
        assert_eq!(sig6(-0.125), "-0.125000");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(f64::INFINITY), "inf");
    }
}
