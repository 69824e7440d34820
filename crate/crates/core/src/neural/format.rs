//! Versioned text format for networks:
//!
//! ```text
//! netfmt 1
//! mlp <n_layers>
//! layer <in> <out> <activation>
//! <in lines of out weights>
//! <one line of out biases>
//! ```
//!
//! A recurrent cell is written as `recurrent <in> <hidden>`, then the `W_x`
//! rows, the `W_h` rows and the bias line, followed by its head as an `mlp`
//! block. Numbers carry 17 significant digits, so files round-trip exactly.

use super::mlp::Dense;
use super::{Activation, Mlp, RecurrentCell};
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use std::fmt::Write as _;

const HEADER: &str = "netfmt 1";

fn write_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let row: Vec<String> = values.map(|v| format!("{v:.16e}")).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

fn write_matrix(out: &mut String, m: &Array2<f64>) {
    for row in m.rows() {
        write_row(out, row.iter());
    }
}

fn write_mlp_block(out: &mut String, net: &Mlp) {
    writeln!(out, "mlp {}", net.layers.len()).unwrap();
    for layer in &net.layers {
        writeln!(
            out,
            "layer {} {} {}",
            layer.w.nrows(),
            layer.w.ncols(),
            layer.activation
        )
        .unwrap();
        write_matrix(out, &layer.w);
        write_row(out, layer.b.iter());
    }
}

impl Mlp {
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\n");
        write_mlp_block(&mut out, self);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.header()?;
        let net = lines.mlp_block()?;
        lines.end()?;
        Ok(net)
    }
}

impl RecurrentCell {
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\n");
        writeln!(out, "recurrent {} {}", self.wx.nrows(), self.wh.nrows()).unwrap();
        write_matrix(&mut out, &self.wx);
        write_matrix(&mut out, &self.wh);
        write_row(&mut out, self.b.iter());
        write_mlp_block(&mut out, &self.head);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.header()?;
        let (line, fields) = lines.next_fields()?;
        if fields.len() != 3 || fields[0] != "recurrent" {
            return Err(parse_err(line, "expected `recurrent <in> <hidden>`"));
        }
        let input = parse_usize(line, &fields[1])?;
        let hidden = parse_usize(line, &fields[2])?;
        let wx = lines.matrix(input, hidden)?;
        let wh = lines.matrix(hidden, hidden)?;
        let b = Array1::from(lines.row(hidden)?);
        let head = lines.mlp_block()?;
        lines.end()?;
        RecurrentCell::from_parts(wx, wh, b, head)
    }
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

fn parse_usize(line: usize, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| parse_err(line, &format!("cannot parse `{field}` as a size")))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }

    fn next_fields(&mut self) -> Result<(usize, Vec<String>)> {
        for (i, raw) in self.inner.by_ref() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Ok((i + 1, line.split_whitespace().map(str::to_string).collect()));
        }
        Err(parse_err(0, "unexpected end of input"))
    }

    fn header(&mut self) -> Result<()> {
        let (line, fields) = self.next_fields()?;
        if fields.join(" ") != HEADER {
            return Err(parse_err(line, "expected `netfmt 1` header"));
        }
        Ok(())
    }

    fn end(&mut self) -> Result<()> {
        match self.next_fields() {
            Ok((line, _)) => Err(parse_err(line, "trailing content")),
            Err(_) => Ok(()),
        }
    }

    fn row(&mut self, width: usize) -> Result<Vec<f64>> {
        let (line, fields) = self.next_fields()?;
        if fields.len() != width {
            return Err(parse_err(
                line,
                &format!("expected {width} numbers, found {}", fields.len()),
            ));
        }
        fields
            .iter()
            .map(|f| {
                let v: f64 = f
                    .parse()
                    .map_err(|_| parse_err(line, &format!("bad number `{f}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(line, "non-finite parameter"))
                }
            })
            .collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.row(cols)?);
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("sizes checked"))
    }

    fn mlp_block(&mut self) -> Result<Mlp> {
        let (line, fields) = self.next_fields()?;
        if fields.len() != 2 || fields[0] != "mlp" {
            return Err(parse_err(line, "expected `mlp <n_layers>`"));
        }
        let n = parse_usize(line, &fields[1])?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, fields) = self.next_fields()?;
            if fields.len() != 4 || fields[0] != "layer" {
                return Err(parse_err(line, "expected `layer <in> <out> <activation>`"));
            }
            let fan_in = parse_usize(line, &fields[1])?;
            let fan_out = parse_usize(line, &fields[2])?;
            let activation: Activation = fields[3]
                .parse()
                .map_err(|_| parse_err(line, &format!("unknown activation `{}`", fields[3])))?;
            let w = self.matrix(fan_in, fan_out)?;
            let b = Array1::from(self.row(fan_out)?);
            layers.push(Dense { w, b, activation });
        }
        let parts = layers
            .into_iter()
            .map(|d| (d.w, d.b, d.activation))
            .collect();
        Mlp::from_layers(parts)
    }
}
