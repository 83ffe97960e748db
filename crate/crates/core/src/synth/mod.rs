//! C header synthesis for a quantized model.
//!
//! [`emit_headers`] renders one configuration header plus one header per
//! layer, and [`parse_headers`] reads exactly that grammar back. The
//! grammar is line-oriented:
//!
//! ```text
//! #ifndef NAME_L0_H
//! #define NAME_L0_H
//!
//! #define NAME_L0_KIND 0
//! ...
//! static const signed char name_l0_weights[] = {
//!   v, v, v, ... (12 per line)
//! };
//! ```
//!
//! Output is UTF-8 with LF line endings and a trailing newline, and is a
//! pure function of the model.

mod parse;
mod test_vector;

pub use parse::parse_headers;
pub use test_vector::{emit_test_vector, parse_test_vector, TestVector};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quant::QuantizedModel;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const VALUES_PER_LINE: usize = 12;

pub(crate) const FLAG_RELU: i64 = 1 << 0;
pub(crate) const FLAG_WIDE: i64 = 1 << 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderFile {
    pub name: String,
    pub contents: String,
}

/// Generated headers in emission order: configuration first, then layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthBundle {
    pub model_name: String,
    pub files: Vec<HeaderFile>,
}

impl SynthBundle {
    pub fn file(&self, name: &str) -> Option<&HeaderFile> {
        self.files.iter().find(|f| f.name == name)
    }

    pub fn total_bytes(&self) -> usize {
        self.files.iter().map(|f| f.contents.len()).sum()
    }

    /// `name: bytes` per file.
    pub fn manifest(&self) -> String {
        self.files
            .iter()
            .map(|f| format!("{}: {}\n", f.name, f.contents.len()))
            .collect()
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for f in &self.files {
            fs::write(dir.join(&f.name), &f.contents)?;
        }
        fs::write(dir.join(MANIFEST_FILE), self.manifest())?;
        Ok(())
    }

    /// Loads the files listed in a directory's manifest, checking sizes.
    pub fn read_from(dir: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let mut files = Vec::new();
        for (i, line) in manifest.lines().enumerate() {
            let parse_err = |message: String| Error::Parse {
                file: MANIFEST_FILE.into(),
                line: i + 1,
                column: 1,
                message,
            };
            let (name, bytes) = line
                .split_once(": ")
                .ok_or_else(|| parse_err("expected `name: bytes`".into()))?;
            let bytes: usize = bytes
                .parse()
                .map_err(|_| parse_err(format!("bad byte count {bytes:?}")))?;
            let contents = fs::read_to_string(dir.join(name))?;
            if contents.len() != bytes {
                return Err(parse_err(format!(
                    "{name} has {} bytes, manifest says {bytes}",
                    contents.len()
                )));
            }
            files.push(HeaderFile {
                name: name.to_string(),
                contents,
            });
        }
        let model_name = files
            .first()
            .and_then(|f| f.name.strip_suffix("_config.h"))
            .ok_or_else(|| Error::Parse {
                file: MANIFEST_FILE.into(),
                line: 1,
                column: 1,
                message: "first entry must be the configuration header".into(),
            })?
            .to_string();
        Ok(Self { model_name, files })
    }
}

pub(crate) fn check_identifier(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidIdentifier(name.to_string()))
    }
}

pub(crate) fn config_file(name: &str) -> String {
    format!("{name}_config.h")
}

pub(crate) fn layer_file(name: &str, layer: usize) -> String {
    format!("{name}_l{layer}.h")
}

/// Accumulates header text in the emission grammar.
pub(crate) struct HeaderWriter {
    out: String,
    guard: String,
}

impl HeaderWriter {
    pub fn new(guard: String) -> Self {
        let mut out = String::new();
        let _ = writeln!(out, "#ifndef {guard}");
        let _ = writeln!(out, "#define {guard}");
        out.push('\n');
        Self { out, guard }
    }

    pub fn define(&mut self, name: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.out, "#define {name} {value}");
    }

    pub fn blank(&mut self) {
        self.out.push('\n');
    }

    pub fn array<T: std::fmt::Display>(&mut self, ctype: &str, name: &str, values: &[T]) {
        let _ = writeln!(self.out, "static const {ctype} {name}[] = {{");
        let lines: Vec<String> = values
            .chunks(VALUES_PER_LINE)
            .map(|chunk| {
                let row: Vec<String> = chunk.iter().map(ToString::to_string).collect();
                format!("  {}", row.join(", "))
            })
            .collect();
        if !lines.is_empty() {
            self.out.push_str(&lines.join(",\n"));
            self.out.push('\n');
        }
        self.out.push_str("};\n");
    }

    pub fn finish(mut self) -> String {
        if !self.out.ends_with("\n\n") {
            self.out.push('\n');
        }
        let _ = writeln!(self.out, "#endif /* {} */", self.guard);
        self.out
    }
}

/// Renders the model as C headers. `model_name` prefixes every symbol and
/// must match `[a-z][a-z0-9_]*`.
pub fn emit_headers(qmodel: &QuantizedModel, model_name: &str) -> Result<SynthBundle> {
    check_identifier(model_name)?;
    qmodel.validate()?;
    let upper = model_name.to_ascii_uppercase();
    let output = qmodel.output_shape()?;

    let mut config = HeaderWriter::new(format!("{upper}_CONFIG_H"));
    config.define(&format!("{upper}_LAYER_COUNT"), qmodel.layers.len());
    config.define(&format!("{upper}_INPUT_C"), qmodel.input_shape.channels);
    config.define(&format!("{upper}_INPUT_H"), qmodel.input_shape.height);
    config.define(&format!("{upper}_INPUT_W"), qmodel.input_shape.width);
    config.define(&format!("{upper}_INPUT_EXP"), qmodel.input.scale_exp());
    config.define(&format!("{upper}_OUTPUT_C"), output.channels);
    config.define(&format!("{upper}_OUTPUT_H"), output.height);
    config.define(&format!("{upper}_OUTPUT_W"), output.width);
    config.define(&format!("{upper}_OUTPUT_EXP"), qmodel.output_exp());
    config.define(
        &format!("{upper}_LAST_LAYER_WIDE"),
        u8::from(qmodel.last_layer_wide),
    );
    let mut files = vec![HeaderFile {
        name: config_file(model_name),
        contents: config.finish(),
    }];

    let last = qmodel.layers.len().saturating_sub(1);
    for (i, layer) in qmodel.layers.iter().enumerate() {
        let prefix = format!("{upper}_L{i}");
        let mut flags = 0;
        if layer.spec.has_relu {
            flags |= FLAG_RELU;
        }
        if qmodel.last_layer_wide && i == last {
            flags |= FLAG_WIDE;
        }
        let mut h = HeaderWriter::new(format!("{prefix}_H"));
        h.define(&format!("{prefix}_KIND"), layer.spec.kind.code());
        h.define(&format!("{prefix}_IN"), layer.spec.in_channels);
        h.define(&format!("{prefix}_OUT"), layer.spec.out_channels);
        h.define(&format!("{prefix}_PAD"), layer.spec.padding);
        h.define(&format!("{prefix}_W_EXP"), layer.weight.scale_exp());
        h.define(&format!("{prefix}_ACT_EXP"), layer.activation.scale_exp());
        h.define(&format!("{prefix}_FLAGS"), flags);
        if layer.spec.kind.is_conv() {
            h.blank();
            h.array("signed char", &format!("{model_name}_l{i}_weights"), &layer.weights);
            h.blank();
            h.array("long", &format!("{model_name}_l{i}_bias"), &layer.bias);
        }
        files.push(HeaderFile {
            name: layer_file(model_name, i),
            contents: h.finish(),
        });
    }
    Ok(SynthBundle {
        model_name: model_name.to_string(),
        files,
    })
}
