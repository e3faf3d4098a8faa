use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DatasetSplit, LabeledExample};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MANIFEST_NAME: &str = "manifest.txt";
const HEADER: &str = "freqshield-dataset 1";

/// Writes `split` as raw little-endian f32 image tensors plus a text
/// manifest holding shapes, dtypes and label arrays.
pub fn export_dir(split: &DatasetSplit, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    writeln!(manifest, "{HEADER}").unwrap();
    writeln!(manifest, "k_t {}", split.k_t).unwrap();
    writeln!(manifest, "k_p {}", split.k_p).unwrap();
    writeln!(manifest, "seed {}", split.seed).unwrap();
    for (name, part) in [("train", &split.train), ("test", &split.test)] {
        let file = format!("{name}_images.bin");
        let mut bytes = Vec::new();
        for e in part.iter() {
            e.image.data().iter().for_each(|v| v.write_le(&mut bytes));
        }
        fs::write(dir.join(&file), bytes)?;
        let dims: Vec<String> = std::iter::once(part.len())
            .chain(part.first().map(|e| e.image.shape().to_vec()).unwrap_or_default())
            .map(|d| d.to_string())
            .collect();
        writeln!(manifest, "tensor {name}_images f32 {} {file}", dims.join(" ")).unwrap();
        for (label, values) in [
            ("y_t", part.iter().map(|e| e.y_t).collect::<Vec<_>>()),
            ("y_p", part.iter().map(|e| e.y_p).collect()),
        ] {
            let vals: Vec<String> = values.iter().map(usize::to_string).collect();
            writeln!(manifest, "labels {name}_{label} {}", vals.join(" ")).unwrap();
        }
    }
    fs::write(dir.join(MANIFEST_NAME), manifest)?;
    Ok(())
}

struct Part {
    shape: Vec<usize>,
    file: String,
    y_t: Vec<usize>,
    y_p: Vec<usize>,
}

/// Reads a directory written by [`export_dir`].
pub fn import_dir(dir: impl AsRef<Path>) -> Result<DatasetSplit> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let mut k_t = None;
    let mut k_p = None;
    let mut seed = None;
    let mut parts: [Option<Part>; 2] = [None, None];
    let mut offset = 0;
    for (lineno, line) in text.lines().enumerate() {
        let at = offset;
        offset += line.len() + 1;
        let bad = |msg: String| Error::Parse { offset: at, message: msg };
        if lineno == 0 {
            if line != HEADER {
                return Err(bad(format!("expected header {HEADER:?}, found {line:?}")));
            }
            continue;
        }
        let mut words = line.split_whitespace();
        let Some(kind) = words.next() else { continue };
        let num = |w: &str| w.parse::<usize>().map_err(|_| bad(format!("{w:?} is not a non-negative integer")));
        let rest: Vec<&str> = words.collect();
        match kind {
            "k_t" | "k_p" | "seed" => {
                let [v] = rest[..] else {
                    return Err(bad(format!("{kind} takes exactly one value")));
                };
                match kind {
                    "k_t" => k_t = Some(num(v)?),
                    "k_p" => k_p = Some(num(v)?),
                    _ => seed = Some(v.parse::<u64>().map_err(|_| bad(format!("bad seed {v:?}")))?),
                }
            }
            "tensor" => {
                if rest.len() < 4 || rest[1] != "f32" {
                    return Err(bad("tensor line must read: tensor <name> f32 <dims...> <file>".into()));
                }
                let slot = part_slot(rest[0], "_images").ok_or_else(|| bad(format!("unknown tensor {}", rest[0])))?;
                let shape = rest[2..rest.len() - 1].iter().map(|w| num(w)).collect::<Result<Vec<_>>>()?;
                let p = parts[slot].get_or_insert_with(empty_part);
                p.shape = shape;
                p.file = rest[rest.len() - 1].to_owned();
            }
            "labels" => {
                let name = rest.first().ok_or_else(|| bad("labels line has no name".into()))?;
                let values = rest[1..].iter().map(|w| num(w)).collect::<Result<Vec<_>>>()?;
                let (slot, is_t) = match (part_slot(name, "_y_t"), part_slot(name, "_y_p")) {
                    (Some(s), _) => (s, true),
                    (_, Some(s)) => (s, false),
                    _ => return Err(bad(format!("unknown label array {name}"))),
                };
                let p = parts[slot].get_or_insert_with(empty_part);
                if is_t {
                    p.y_t = values;
                } else {
                    p.y_p = values;
                }
            }
            other => return Err(bad(format!("unknown manifest entry {other:?}"))),
        }
    }
    let missing = |what: &str| Error::Parse {
        offset: text.len(),
        message: format!("manifest has no {what}"),
    };
    let (k_t, k_p) = (k_t.ok_or_else(|| missing("k_t"))?, k_p.ok_or_else(|| missing("k_p"))?);
    let seed = seed.ok_or_else(|| missing("seed"))?;
    let [train, test] = parts;
    let train = load_part(dir, train.ok_or_else(|| missing("train tensors"))?, k_t, k_p)?;
    let test = load_part(dir, test.ok_or_else(|| missing("test tensors"))?, k_t, k_p)?;
    Ok(DatasetSplit {
        train,
        test,
        k_t,
        k_p,
        seed,
    })
}

fn empty_part() -> Part {
    Part {
        shape: Vec::new(),
        file: String::new(),
        y_t: Vec::new(),
        y_p: Vec::new(),
    }
}

fn part_slot(name: &str, suffix: &str) -> Option<usize> {
    match name.strip_suffix(suffix)? {
        "train" => Some(0),
        "test" => Some(1),
        _ => None,
    }
}

fn load_part(dir: &Path, part: Part, k_t: usize, k_p: usize) -> Result<Vec<LabeledExample>> {
    let n = part.shape.first().copied().unwrap_or(0);
    if part.y_t.len() != n || part.y_p.len() != n {
        return Err(Error::Validation(format!(
            "{}: {n} images but {} / {} labels",
            part.file,
            part.y_t.len(),
            part.y_p.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let bytes = fs::read(dir.join(&part.file))?;
    let per: usize = part.shape[1..].iter().product();
    if bytes.len() != n * per * 4 {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("{} holds {} bytes, manifest implies {}", part.file, bytes.len(), n * per * 4),
        });
    }
    let mut out = Vec::with_capacity(n);
    for (i, chunk) in bytes.chunks_exact(per * 4).enumerate() {
        let data: Vec<f32> = chunk.chunks_exact(4).map(f32::read_le).collect();
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation(format!("{} image {i} has pixels outside [0, 1]", part.file)));
        }
        let (y_t, y_p) = (part.y_t[i], part.y_p[i]);
        if y_t >= k_t || y_p >= k_p {
            return Err(Error::Validation(format!(
                "{} example {i} has labels ({y_t}, {y_p}) outside ({k_t}, {k_p})",
                part.file
            )));
        }
        out.push(LabeledExample {
            image: Tensor::new(part.shape[1..].to_vec(), data)?,
            y_t,
            y_p,
        });
    }
    Ok(out)
}
