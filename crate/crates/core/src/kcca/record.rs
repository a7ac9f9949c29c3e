use std::fmt::Write as _;

use faer::Mat;

use super::{KccaModel, Landmarks};
use crate::error::{Error, Result};
use crate::kernels::{KernelData, KernelSpec};

const HEADER: &str = "kcca-model v1";

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn write_matrix(out: &mut String, name: &str, m: &Mat<f64>) {
    let _ = writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let _ = writeln!(out, "{}", join((0..m.ncols()).map(|j| m[(i, j)])));
    }
}

pub(super) fn write(model: &KccaModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "lambda1 {}", model.lambda1);
    let _ = writeln!(out, "lambda2 {}", model.lambda2);
    let _ = writeln!(out, "L {}", model.l);
    let _ = writeln!(out, "rho {}", join(model.rho.iter()));
    for (v, lm) in model.landmarks.iter().enumerate() {
        let _ = writeln!(out, "landmarks{} {}", v + 1, join(lm.indices.iter()));
        let _ = writeln!(out, "weights{} {}", v + 1, join(lm.weights.iter()));
    }
    write_matrix(&mut out, "alpha_prime", &model.alpha_prime);
    write_matrix(&mut out, "beta_prime", &model.beta_prime);
    if let Some(a) = &model.alpha {
        write_matrix(&mut out, "alpha", a);
    }
    if let Some(b) = &model.beta {
        write_matrix(&mut out, "beta", b);
    }
    if let Some(t) = &model.training {
        for (v, d) in t.iter().enumerate() {
            let _ = writeln!(out, "kernel{} rbf {}", v + 1, d.spec.sigma);
            write_matrix(&mut out, &format!("training{}", v + 1), &d.data());
        }
    }
    let _ = writeln!(out, "end");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.inner.next().map(|(i, l)| (i + 1, l.trim()))
    }
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_list<T: std::str::FromStr>(line: usize, s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|e| perr(line, e.to_string())))
        .collect()
}

fn parse_one<T: std::str::FromStr>(line: usize, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| perr(line, e.to_string()))
}

fn read_matrix(lines: &mut Lines<'_>, at: usize, dims: &str) -> Result<Mat<f64>> {
    let mut it = dims.split_whitespace();
    let r: usize = parse_one(at, it.next().unwrap_or(""))?;
    let c: usize = parse_one(at, it.next().unwrap_or(""))?;
    let mut m = Mat::zeros(r, c);
    for i in 0..r {
        let (ln, text) = lines.next().ok_or_else(|| perr(at, "truncated matrix"))?;
        let row: Vec<f64> = parse_list(ln, text)?;
        if row.len() != c {
            return Err(perr(ln, format!("expected {c} values, found {}", row.len())));
        }
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

pub(super) fn read(text: &str) -> Result<KccaModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((ln, other)) => return Err(perr(ln, format!("unsupported header `{other}`"))),
        None => return Err(perr(0, "empty record")),
    }
    let mut lambda = [None, None];
    let mut l = None;
    let mut rho = None;
    let mut landmarks: [Landmarks; 2] = Default::default();
    let mut mats: std::collections::HashMap<String, Mat<f64>> = Default::default();
    let mut kernels = [None, None];
    let mut ended = false;
    while let Some((ln, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let (key, val) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "lambda1" => lambda[0] = Some(parse_one::<f64>(ln, val)?),
            "lambda2" => lambda[1] = Some(parse_one::<f64>(ln, val)?),
            "L" => l = Some(parse_one::<usize>(ln, val)?),
            "rho" => rho = Some(parse_list::<f64>(ln, val)?),
            "landmarks1" => landmarks[0].indices = parse_list(ln, val)?,
            "landmarks2" => landmarks[1].indices = parse_list(ln, val)?,
            "weights1" => landmarks[0].weights = parse_list(ln, val)?,
            "weights2" => landmarks[1].weights = parse_list(ln, val)?,
            "kernel1" | "kernel2" => {
                let sigma = val
                    .strip_prefix("rbf ")
                    .ok_or_else(|| perr(ln, "unknown kernel family"))?;
                let spec = KernelSpec::rbf(parse_one(ln, sigma)?)?;
                kernels[usize::from(key == "kernel2")] = Some(spec);
            }
            "matrix" => {
                let (name, dims) = val.split_once(' ').ok_or_else(|| perr(ln, "malformed matrix header"))?;
                let m = read_matrix(&mut lines, ln, dims)?;
                mats.insert(name.to_string(), m);
            }
            "end" => {
                ended = true;
                break;
            }
            other => return Err(perr(ln, format!("unknown key `{other}`"))),
        }
    }
    if !ended {
        return Err(perr(0, "missing `end`"));
    }
    let missing = |what: &str| perr(0, format!("missing {what}"));
    let alpha_prime = mats.remove("alpha_prime").ok_or_else(|| missing("alpha_prime"))?;
    let beta_prime = mats.remove("beta_prime").ok_or_else(|| missing("beta_prime"))?;
    let training = match (kernels, mats.remove("training1"), mats.remove("training2")) {
        ([Some(k1), Some(k2)], Some(x), Some(y)) => {
            Some([KernelData::new(k1, x.as_ref()), KernelData::new(k2, y.as_ref())])
        }
        ([None, None], None, None) => None,
        _ => return Err(missing("part of the training data")),
    };
    Ok(KccaModel {
        lambda1: lambda[0].ok_or_else(|| missing("lambda1"))?,
        lambda2: lambda[1].ok_or_else(|| missing("lambda2"))?,
        l: l.ok_or_else(|| missing("L"))?,
        rho: rho.ok_or_else(|| missing("rho"))?,
        alpha_prime,
        beta_prime,
        alpha: mats.remove("alpha"),
        beta: mats.remove("beta"),
        training,
        landmarks,
    })
}
