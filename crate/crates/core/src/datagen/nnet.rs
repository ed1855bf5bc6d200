use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{Activation, BoxDomain, LinearLayer, Network};

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let mut inner = text.lines().enumerate().peekable();
        while inner.next_if(|(_, l)| l.trim_start().starts_with("//")).is_some() {}
        Lines { inner, last: 0 }
    }

    /// Next non-blank line as numbers, with its 1-based line number.
    fn numbers(&mut self, what: &str) -> Result<(usize, Vec<f64>)> {
        loop {
            let Some((i, line)) = self.inner.next() else {
                return Err(Error::parse(self.last + 1, format!("unexpected end of file, expected {what}")));
            };
            self.last = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut out = Vec::new();
            for tok in line.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(i + 1, format!("invalid number `{tok}` in {what}")))?;
                out.push(v);
            }
            return Ok((i + 1, out));
        }
    }

    fn exactly(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let (line, v) = self.numbers(what)?;
        if v.len() != n {
            return Err(Error::parse(line, format!("{what}: expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }
}

fn count(v: f64, line: usize, what: &str) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::parse(line, format!("{what} must be a non-negative integer")));
    }
    Ok(v as usize)
}

/// Parses an NNet file into a ReLU network and its input box.
///
/// Input normalisation `(x - mean) / range` is folded into the first layer,
/// so the returned network takes raw inputs. Output normalisation is not
/// applied. The box is the file's `[min, max]` input range.
pub fn parse_nnet(text: &str) -> Result<(Network, BoxDomain)> {
    let mut lines = Lines::new(text);
    let (hline, header) = lines.numbers("header")?;
    if header.len() < 3 {
        return Err(Error::parse(hline, "header needs layer count, input size and output size"));
    }
    let num_layers = count(header[0], hline, "layer count")?;
    let input = count(header[1], hline, "input size")?;
    let output = count(header[2], hline, "output size")?;
    if num_layers == 0 {
        return Err(Error::parse(hline, "layer count must be positive"));
    }
    let (sline, raw_sizes) = lines.numbers("layer sizes")?;
    if raw_sizes.len() != num_layers + 1 {
        return Err(Error::parse(
            sline,
            format!("layer sizes: expected {} values, found {}", num_layers + 1, raw_sizes.len()),
        ));
    }
    let sizes = raw_sizes
        .iter()
        .map(|v| count(*v, sline, "layer size"))
        .collect::<Result<Vec<_>>>()?;
    if sizes[0] != input || sizes[num_layers] != output {
        return Err(Error::parse(sline, "layer sizes disagree with the header"));
    }
    lines.numbers("symmetric flag")?;
    let mins = lines.exactly(input, "input minimums")?;
    let maxes = lines.exactly(input, "input maximums")?;
    let means = lines.exactly(input + 1, "means")?;
    let (rline, ranges) = lines.numbers("ranges")?;
    if ranges.len() != input + 1 {
        return Err(Error::parse(rline, format!("ranges: expected {} values, found {}", input + 1, ranges.len())));
    }
    if ranges[..input].contains(&0.0) {
        return Err(Error::parse(rline, "input range of zero"));
    }

    let mut linears = Vec::with_capacity(num_layers);
    for k in 0..num_layers {
        let (rows, cols) = (sizes[k + 1], sizes[k]);
        let mut w = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let row = lines.exactly(cols, &format!("layer {} weight row {}", k + 1, i + 1))?;
            w.row_mut(i).copy_from_slice(&row);
        }
        let mut b = DVector::zeros(rows);
        for i in 0..rows {
            b[i] = lines.exactly(1, &format!("layer {} bias {}", k + 1, i + 1))?[0];
        }
        linears.push((w, b));
    }

    let (w0, b0) = &mut linears[0];
    for j in 0..input {
        let shift = means[j] / ranges[j];
        for i in 0..w0.nrows() {
            b0[i] -= w0[(i, j)] * shift;
        }
        w0.column_mut(j).scale_mut(1.0 / ranges[j]);
    }
    let linears = linears
        .into_iter()
        .map(|(w, b)| LinearLayer::new(w, b))
        .collect::<Result<Vec<_>>>()?;
    let net = Network::new(linears, vec![Activation::Relu; num_layers - 1])?;
    let dom = BoxDomain::new(mins, maxes).map_err(|e| Error::parse(0, e.to_string()))?;
    Ok((net, dom))
}

pub fn read_nnet(path: impl AsRef<Path>) -> Result<(Network, BoxDomain)> {
    parse_nnet(&std::fs::read_to_string(path)?)
}

/// Writes a ReLU network in NNet format with identity normalisation.
pub fn write_nnet(net: &Network, domain: &BoxDomain) -> Result<String> {
    if !net.is_relu_only() {
        return Err(Error::Unsupported("NNet files only hold ReLU networks".into()));
    }
    let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x},")).collect::<String>();
    let mut sizes = vec![net.input_dim()];
    sizes.extend(net.linears().iter().map(|l| l.rows()));
    let d = net.input_dim();
    let mut s = String::new();
    writeln!(s, "// written by plnnv").unwrap();
    writeln!(
        s,
        "{},{},{},{},",
        net.num_linear(),
        d,
        net.output_dim(),
        sizes.iter().max().unwrap()
    )
    .unwrap();
    writeln!(s, "{}", sizes.iter().map(|v| format!("{v},")).collect::<String>()).unwrap();
    writeln!(s, "0,").unwrap();
    writeln!(s, "{}", join(&mut domain.lower().iter().copied())).unwrap();
    writeln!(s, "{}", join(&mut domain.upper().iter().copied())).unwrap();
    writeln!(s, "{}", join(&mut std::iter::repeat_n(0.0, d + 1))).unwrap();
    writeln!(s, "{}", join(&mut std::iter::repeat_n(1.0, d + 1))).unwrap();
    for lin in net.linears() {
        for i in 0..lin.rows() {
            writeln!(s, "{}", join(&mut lin.weights().row(i).iter().copied())).unwrap();
        }
        for b in lin.bias().iter() {
            writeln!(s, "{b},").unwrap();
        }
    }
    Ok(s)
}
