use std::collections::HashMap;

use super::{check_identifier, config_file, layer_file, SynthBundle, FLAG_RELU, FLAG_WIDE};
use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec};
use crate::quant::{QuantParams, QuantizedLayer, QuantizedModel, MAX_SCALE_EXP};
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Located {
    pub value: i64,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CType {
    SignedChar,
    Long,
}

#[derive(Debug)]
pub(crate) struct ParsedArray {
    pub ctype: CType,
    pub line: usize,
    pub values: Vec<Located>,
}

/// Macros and arrays of one header, with source positions.
#[derive(Debug)]
pub(crate) struct ParsedHeader {
    pub file: String,
    lines: usize,
    macros: HashMap<String, Located>,
    arrays: HashMap<String, ParsedArray>,
}

impl ParsedHeader {
    pub fn error(&self, line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line,
            column,
            message: message.into(),
        }
    }

    pub fn macro_value(&self, name: &str) -> Result<Located> {
        self.macros
            .get(name)
            .copied()
            .ok_or_else(|| self.error(self.lines, 1, format!("missing macro {name}")))
    }

    pub fn integer<T: TryFrom<i64>>(&self, name: &str, target: &'static str) -> Result<T> {
        let m = self.macro_value(name)?;
        self.convert(m, target)
    }

    pub fn convert<T: TryFrom<i64>>(&self, at: Located, target: &'static str) -> Result<T> {
        T::try_from(at.value).map_err(|_| Error::Range {
            file: self.file.clone(),
            line: at.line,
            column: at.column,
            value: at.value,
            target,
        })
    }

    pub fn scale(&self, name: &str) -> Result<QuantParams> {
        let m = self.macro_value(name)?;
        if !(0..=i64::from(MAX_SCALE_EXP)).contains(&m.value) {
            return Err(Error::Range {
                file: self.file.clone(),
                line: m.line,
                column: m.column,
                value: m.value,
                target: "scale exponent",
            });
        }
        QuantParams::new(m.value as i32)
    }

    pub fn array(&self, name: &str, ctype: CType) -> Result<&ParsedArray> {
        let a = self
            .arrays
            .get(name)
            .ok_or_else(|| self.error(self.lines, 1, format!("missing array {name}")))?;
        if a.ctype != ctype {
            return Err(self.error(a.line, 1, format!("array {name} has the wrong element type")));
        }
        Ok(a)
    }

    /// Converts an array, checking its length and each element's range.
    pub fn values<T: TryFrom<i64>>(
        &self,
        name: &str,
        ctype: CType,
        len: usize,
        target: &'static str,
    ) -> Result<Vec<T>> {
        let a = self.array(name, ctype)?;
        if a.values.len() != len {
            return Err(self.error(
                a.line,
                1,
                format!("array {name} has {} values, expected {len}", a.values.len()),
            ));
        }
        a.values.iter().map(|&v| self.convert(v, target)).collect()
    }

    pub fn array_count(&self) -> usize {
        self.arrays.len()
    }
}

fn parse_int(token: &str) -> Option<i64> {
    let digits = token.strip_prefix('-').unwrap_or(token);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}

fn is_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct OpenArray {
    name: String,
    array: ParsedArray,
    expect_more: bool,
}

pub(crate) fn parse_header(file: &str, text: &str) -> Result<ParsedHeader> {
    let err = |line: usize, column: usize, message: String| Error::Parse {
        file: file.to_string(),
        line,
        column,
        message,
    };
    let mut macros = HashMap::new();
    let mut arrays = HashMap::new();
    let mut open: Option<OpenArray> = None;
    let mut line_count = 0;

    for (i, raw) in text.split('\n').enumerate() {
        let n = i + 1;
        line_count = n;
        if let Some(col) = raw.find('\r') {
            return Err(err(n, col + 1, "carriage return".into()));
        }
        if let Some(cur) = open.as_mut() {
            if raw.trim() == "};" {
                let done = open.take().unwrap();
                arrays.insert(done.name, done.array);
                continue;
            }
            if !cur.expect_more {
                return Err(err(n, 1, "missing comma between rows".into()));
            }
            let mut offset = 0;
            let pieces: Vec<&str> = raw.split(',').collect();
            for (k, piece) in pieces.iter().enumerate() {
                let token = piece.trim();
                let column = offset + piece.len() - piece.trim_start().len() + 1;
                offset += piece.len() + 1;
                if token.is_empty() {
                    if k + 1 == pieces.len() && k > 0 {
                        continue;
                    }
                    return Err(err(n, column, "expected a value".into()));
                }
                let value = parse_int(token)
                    .ok_or_else(|| err(n, column, format!("invalid integer {token:?}")))?;
                cur.array.values.push(Located {
                    value,
                    line: n,
                    column,
                });
            }
            cur.expect_more = raw.trim_end().ends_with(',');
            continue;
        }

        let line = raw.trim_end();
        if line.is_empty() || (line.starts_with("/*") && line.ends_with("*/")) {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let words: Vec<&str> = rest.split_whitespace().collect();
            match words.as_slice() {
                ["ifndef", g] | ["define", g] if is_symbol(g) => {}
                ["endif"] => {}
                ["endif", "/*", .., "*/"] => {}
                ["define", name, value] if is_symbol(name) => {
                    let column = line.rfind(value).unwrap() + 1;
                    let value = parse_int(value)
                        .ok_or_else(|| err(n, column, format!("invalid integer {value:?}")))?;
                    let at = Located {
                        value,
                        line: n,
                        column,
                    };
                    if macros.insert(name.to_string(), at).is_some() {
                        return Err(err(n, 1, format!("duplicate macro {name}")));
                    }
                }
                _ => return Err(err(n, 1, format!("unexpected directive {line:?}"))),
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("static const ") {
            let (ctype, rest) = if let Some(r) = rest.strip_prefix("signed char ") {
                (CType::SignedChar, r)
            } else if let Some(r) = rest.strip_prefix("long ") {
                (CType::Long, r)
            } else {
                return Err(err(n, 14, "unsupported element type".into()));
            };
            let name = rest
                .strip_suffix("[] = {")
                .filter(|s| is_symbol(s))
                .ok_or_else(|| err(n, 1, "malformed array declaration".into()))?;
            if arrays.contains_key(name) {
                return Err(err(n, 1, format!("duplicate array {name}")));
            }
            open = Some(OpenArray {
                name: name.to_string(),
                array: ParsedArray {
                    ctype,
                    line: n,
                    values: Vec::new(),
                },
                expect_more: true,
            });
            continue;
        }
        return Err(err(n, 1, format!("unexpected text {line:?}")));
    }
    if let Some(cur) = open {
        return Err(err(cur.array.line, 1, format!("unterminated array {}", cur.name)));
    }
    Ok(ParsedHeader {
        file: file.to_string(),
        lines: line_count,
        macros,
        arrays,
    })
}

pub(crate) fn header_of(bundle: &SynthBundle, name: &str) -> Result<ParsedHeader> {
    let file = bundle.file(name).ok_or_else(|| Error::Parse {
        file: name.to_string(),
        line: 0,
        column: 0,
        message: "file missing from bundle".into(),
    })?;
    parse_header(name, &file.contents)
}

/// Reconstructs a quantized model from headers produced by
/// [`emit_headers`](super::emit_headers).
pub fn parse_headers(bundle: &SynthBundle) -> Result<QuantizedModel> {
    let name = bundle.model_name.as_str();
    check_identifier(name)?;
    let upper = name.to_ascii_uppercase();
    let config = header_of(bundle, &config_file(name))?;
    let key = |s: &str| format!("{upper}_{s}");

    let count: usize = config.integer(&key("LAYER_COUNT"), "layer count")?;
    let input_shape = Shape::new(
        config.integer(&key("INPUT_C"), "usize")?,
        config.integer(&key("INPUT_H"), "usize")?,
        config.integer(&key("INPUT_W"), "usize")?,
    );
    let input = config.scale(&key("INPUT_EXP"))?;
    let wide_at = config.macro_value(&key("LAST_LAYER_WIDE"))?;
    let last_layer_wide = match wide_at.value {
        0 => false,
        1 => true,
        _ => return Err(config.error(wide_at.line, wide_at.column, "expected 0 or 1")),
    };

    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let h = header_of(bundle, &layer_file(name, i))?;
        let key = |s: &str| format!("{upper}_L{i}_{s}");
        let kind = LayerKind::from_code(h.integer(&key("KIND"), "u8")?);
        let flags_at = h.macro_value(&key("FLAGS"))?;
        if flags_at.value & !(FLAG_RELU | FLAG_WIDE) != 0 {
            return Err(h.error(flags_at.line, flags_at.column, "unknown flag bits"));
        }
        let wide = flags_at.value & FLAG_WIDE != 0;
        if wide != (last_layer_wide && i + 1 == count) {
            return Err(h.error(flags_at.line, flags_at.column, "wide flag disagrees with configuration"));
        }
        let spec = LayerSpec {
            kind,
            in_channels: h.integer(&key("IN"), "usize")?,
            out_channels: h.integer(&key("OUT"), "usize")?,
            has_relu: flags_at.value & FLAG_RELU != 0,
            has_batchnorm: false,
            padding: h.integer(&key("PAD"), "usize")?,
        };
        let (weights, bias) = if kind.is_conv() {
            (
                h.values(&format!("{name}_l{i}_weights"), CType::SignedChar, spec.weight_count(), "int8")?,
                h.values(&format!("{name}_l{i}_bias"), CType::Long, spec.out_channels, "int32")?,
            )
        } else {
            if h.array_count() != 0 {
                return Err(h.error(1, 1, "pooling layer carries arrays"));
            }
            (Vec::new(), Vec::new())
        };
        layers.push(QuantizedLayer {
            spec,
            weight: h.scale(&key("W_EXP"))?,
            activation: h.scale(&key("ACT_EXP"))?,
            weights,
            bias,
        });
    }
    let model = QuantizedModel {
        input_shape,
        input,
        layers,
        last_layer_wide,
    };
    model.validate()?;

    let out = model.output_shape()?;
    for (suffix, value) in [
        ("OUTPUT_C", out.channels as i64),
        ("OUTPUT_H", out.height as i64),
        ("OUTPUT_W", out.width as i64),
        ("OUTPUT_EXP", i64::from(model.output_exp())),
    ] {
        let at = config.macro_value(&key(suffix))?;
        if at.value != value {
            return Err(config.error(
                at.line,
                at.column,
                format!("{} is {}, the layers give {value}", key(suffix), at.value),
            ));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::{emit_headers, HeaderFile};
    use super::*;
    use crate::model::LayerSpec;

    fn small_model() -> QuantizedModel {
        let q = |e| QuantParams::new(e).unwrap();
        QuantizedModel {
            input_shape: Shape::new(2, 4, 4),
            input: QuantParams::input(),
            layers: vec![
                QuantizedLayer {
                    spec: LayerSpec::conv3x3(2, 3).with_relu(),
                    weight: q(6),
                    activation: q(5),
                    weights: (0..54).map(|v| (v * 5 - 128) as i8).collect(),
                    bias: vec![-7, 0, 1 << 20],
                },
                QuantizedLayer {
                    spec: LayerSpec::max_pool(3),
                    weight: q(0),
                    activation: q(5),
                    weights: vec![],
                    bias: vec![],
                },
                QuantizedLayer {
                    spec: LayerSpec::conv1x1(3, 2),
                    weight: q(8),
                    activation: q(4),
                    weights: vec![127, -128, 0, 1, -1, 64],
                    bias: vec![i32::MAX, -i32::MAX],
                },
            ],
            last_layer_wide: true,
        }
    }

    fn replace(bundle: &mut SynthBundle, file: &str, from: &str, to: &str) {
        let f: &mut HeaderFile = bundle.files.iter_mut().find(|f| f.name == file).unwrap();
        assert!(f.contents.contains(from), "{from:?} not in {file}");
        f.contents = f.contents.replacen(from, to, 1);
    }

    #[test]
    fn round_trip() {
        let m = small_model();
        let b = emit_headers(&m, "tiny").unwrap();
        assert_eq!(parse_headers(&b).unwrap(), m);
    }

    #[test]
    fn int8_out_of_range_reports_position() {
        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        replace(&mut b, "tiny_l2.h", "  127, -128", "  200, -128");
        match parse_headers(&b).unwrap_err() {
            Error::Range {
                file,
                line,
                column,
                value,
                target,
            } => {
                assert_eq!(file, "tiny_l2.h");
                let text = &b.file("tiny_l2.h").unwrap().contents;
                assert_eq!(text.lines().nth(line - 1).unwrap(), "  200, -128, 0, 1, -1, 64");
                assert_eq!((column, value, target), (3, 200, "int8"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_macro_is_named() {
        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        replace(&mut b, "tiny_l0.h", "#define TINY_L0_W_EXP 6\n", "");
        let msg = parse_headers(&b).unwrap_err().to_string();
        assert!(msg.contains("TINY_L0_W_EXP"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        replace(&mut b, "tiny_l2.h", "0, 1, -1", "0, x1, -1");
        match parse_headers(&b).unwrap_err() {
            Error::Parse { column, .. } => assert_eq!(column, 17),
            other => panic!("unexpected {other:?}"),
        }

        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        replace(&mut b, "tiny_l2.h", "};", "");
        assert!(matches!(parse_headers(&b), Err(Error::Parse { .. })));

        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        replace(&mut b, "tiny_config.h", "#define TINY_OUTPUT_EXP", "#define TINY_OUTPUT_EXP 1\n#define TINY_OUTPUT_EXP");
        assert!(parse_headers(&b).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn semantic_errors() {
        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        replace(&mut b, "tiny_l2.h", "  127, -128, 0, 1, -1, 64", "  127, -128, 0, 1, -1");
        assert!(parse_headers(&b).unwrap_err().to_string().contains("expected 6"));

        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        replace(&mut b, "tiny_l0.h", "#define TINY_L0_W_EXP 6", "#define TINY_L0_W_EXP 31");
        assert!(matches!(parse_headers(&b), Err(Error::Range { value: 31, .. })));

        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        replace(&mut b, "tiny_config.h", "#define TINY_OUTPUT_H 2", "#define TINY_OUTPUT_H 3");
        assert!(matches!(parse_headers(&b), Err(Error::Parse { .. })));

        let mut b = emit_headers(&small_model(), "tiny").unwrap();
        b.files.pop();
        assert!(parse_headers(&b).unwrap_err().to_string().contains("tiny_l2.h"));
    }
}
