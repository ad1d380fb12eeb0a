//! Text output with 17 significant digits, so reruns can be compared byte for byte.

use std::io;

use serde::Serialize;

/// `v` with 17 significant digits; non-finite values print as `NaN`, `inf`, `-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

/// Compact JSON formatter writing every float with 17 significant digits.
/// Non-finite floats become `null` (serde_json's behaviour).
struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{:.16e}", v as f64)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits);
    value
        .serialize(&mut ser)
        .expect("serialization to memory cannot fail");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}
