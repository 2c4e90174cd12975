//! Checkpoint files.
//!
//! Plain text, one header line, `key value` settings, then tensors:
//!
//! ```text
//! travmetric-checkpoint 1
//! mode full
//! k_enc 8
//! embed_dim 16
//! hidden 64
//! head_hidden 16
//! temperature 0.05
//! tensor input.shift 1 8
//! <feature standardisation shift>
//! tensor input.scale 1 8
//! <feature standardisation scale>
//! tensor trunk.0.weight 64 8
//! <one matrix row per line, space separated>
//! tensor trunk.0.bias 1 64
//! ...
//! tensor bank.positive 128 16
//! tensor bank.negative 128 16
//! end
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so save/load is exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::encoder::{EncoderModel, EncoderShape, InputNorm, Layer, FEATURE_DIM};
use crate::linalg::Matrix;
use crate::proxybank::ProxyBank;
use crate::trainer::TrainMode;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "travmetric-checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: TrainMode,
    pub model: EncoderModel,
    pub bank: ProxyBank,
}

fn write_tensor(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "tensor {name} {} {}", m.rows, m.cols);
    for r in 0..m.rows {
        let row = m.row(r);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
}

fn layer_names(prefix: &str, layers: &[Layer]) -> Vec<(String, String)> {
    (0..layers.len())
        .map(|i| (format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias")))
        .collect()
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "mode {}", self.mode);
        let _ = writeln!(out, "k_enc {}", m.shape.k_enc);
        let _ = writeln!(out, "embed_dim {}", m.shape.embed_dim);
        let _ = writeln!(out, "hidden {}", m.shape.hidden);
        let _ = writeln!(out, "head_hidden {}", m.shape.head_hidden);
        let _ = writeln!(out, "temperature {}", self.bank.temperature);
        write_tensor(
            &mut out,
            "input.shift",
            &Matrix::from_vec(1, FEATURE_DIM, m.input.shift.to_vec()),
        );
        write_tensor(
            &mut out,
            "input.scale",
            &Matrix::from_vec(1, FEATURE_DIM, m.input.scale.to_vec()),
        );
        for (prefix, layers) in [
            ("trunk", &m.trunk[..]),
            ("reg_head", &m.reg_head[..]),
            ("seg_head", &m.seg_head[..]),
        ] {
            for ((wn, bn), l) in layer_names(prefix, layers).iter().zip(layers) {
                write_tensor(&mut out, wn, &l.weight);
                write_tensor(
                    &mut out,
                    bn,
                    &Matrix::from_vec(1, l.bias.len(), l.bias.clone()),
                );
            }
        }
        write_tensor(&mut out, "bank.positive", &self.bank.positive);
        write_tensor(&mut out, "bank.negative", &self.bank.negative);
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut r = LineReader {
            lines: text.lines().enumerate().peekable(),
            origin,
            eof: text.lines().count(),
        };
        let (n, header) = r.next("header")?;
        match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            [MAGIC, v] if *v == FORMAT_VERSION.to_string() => {}
            _ => return Err(r.err(n, format!("unsupported checkpoint header {header:?}"))),
        }
        let mode: TrainMode = r.setting("mode")?.parse()?;
        let shape = EncoderShape {
            k_enc: r.number("k_enc")?,
            embed_dim: r.number("embed_dim")?,
            hidden: r.number("hidden")?,
            head_hidden: r.number("head_hidden")?,
        };
        shape.validate()?;
        let temperature: f64 = r.number("temperature")?;

        let (d, h, hh) = (shape.embed_dim, shape.hidden, shape.head_hidden);
        let fd = FEATURE_DIM;
        let vector = |m: Matrix| -> [f64; FEATURE_DIM] { std::array::from_fn(|j| m.data[j]) };
        let input = InputNorm {
            shift: vector(r.tensor("input.shift", 1, fd)?),
            scale: vector(r.tensor("input.scale", 1, fd)?),
        };
        let trunk = [
            r.layer("trunk.0", h, fd)?,
            r.layer("trunk.1", h, h)?,
            r.layer("trunk.2", d, h)?,
        ];
        let reg_head = [r.layer("reg_head.0", hh, d)?, r.layer("reg_head.1", 1, hh)?];
        let seg_head = [r.layer("seg_head.0", hh, d)?, r.layer("seg_head.1", 1, hh)?];
        let (n, kline) = r.peek("bank tensors")?;
        let k: usize = kline
            .split_whitespace()
            .nth(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| r.err(n, "bad bank tensor header".into()))?;
        let positive = r.tensor("bank.positive", k, d)?;
        let negative = r.tensor("bank.negative", k, d)?;
        let (n, last) = r.next("end marker")?;
        if last.trim() != "end" {
            return Err(r.err(n, format!("expected end, found {last:?}")));
        }
        Ok(Checkpoint {
            mode,
            model: EncoderModel {
                shape,
                input,
                trunk,
                reg_head,
                seg_head,
            },
            bank: ProxyBank::from_proxies(positive, negative, temperature)?,
        })
    }
}

struct LineReader<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: std::iter::Peekable<I>,
    origin: &'a Path,
    eof: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> LineReader<'a, I> {
    fn err(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self.origin.to_path_buf(),
            line: line + 1,
            message,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some(l) => Ok(l),
            None => Err(self.err(self.eof, format!("unexpected end of file, missing {what}"))),
        }
    }

    fn peek(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.lines.peek() {
            Some(&l) => Ok(l),
            None => Err(self.err(self.eof, format!("unexpected end of file, missing {what}"))),
        }
    }

    fn setting(&mut self, key: &str) -> Result<String> {
        let (n, line) = self.next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(self.err(n, format!("expected {key}, found {line:?}"))),
        }
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.setting(key)?;
        v.parse()
            .map_err(|_| Error::data(format!("checkpoint {key}: bad value {v:?}")))
    }

    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let (n, line) = self.next(name)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let (rs, cs) = (rows.to_string(), cols.to_string());
        let expect = ["tensor", name, rs.as_str(), cs.as_str()];
        if toks != expect {
            return Err(self.err(
                n,
                format!("expected `{}`, found {line:?}", expect.join(" ")),
            ));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = self.next(name)?;
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| self.err(n, format!("bad number {tok:?}")))?;
                if !v.is_finite() {
                    return Err(self.err(n, "non-finite parameter".into()));
                }
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(self.err(n, format!("row of {name} has wrong length")));
            }
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn layer(&mut self, name: &str, out: usize, inp: usize) -> Result<Layer> {
        let weight = self.tensor(&format!("{name}.weight"), out, inp)?;
        let bias = self.tensor(&format!("{name}.bias"), 1, out)?.data;
        Ok(Layer { weight, bias })
    }
}
