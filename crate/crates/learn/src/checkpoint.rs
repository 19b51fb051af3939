//! Binary checkpoints of the network pair.
//!
//! Header: magic `NILPCKPT`, then little-endian `u32` version, `a`, `b`,
//! width `n` and layer count. One table entry per layer follows: network,
//! kind and axis tags plus a reserved byte, then `u32` in channels, out
//! channels, groups, window and parameter count. Parameters come last,
//! per layer in table order, weights before bias, as little-endian `f32`.

use std::io::{Read, Write};
use std::path::Path;

use nilprove_core::Shape;

use crate::model::{Axis, Head, Layer, LayerKind, LayerSpec, ValueModel};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NILPCKPT";
pub const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in 32 bits")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn head_tag(h: Head) -> u8 {
    match h {
        Head::Global => 0,
        Head::Local => 1,
    }
}

fn axis_tag(a: Axis) -> u8 {
    match a {
        Axis::None => 0,
        Axis::X => 1,
        Axis::Y => 2,
    }
}

pub fn write_models(w: &mut impl Write, global: &ValueModel, local: &ValueModel) -> Result<()> {
    if global.head != Head::Global || local.head != Head::Local {
        return Err(Error::Checkpoint("expected a global and a local network".into()));
    }
    if global.shape != local.shape || global.width != local.width {
        return Err(Error::Checkpoint("networks disagree on shape or width".into()));
    }
    w.write_all(MAGIC)?;
    put_u32(w, VERSION as usize)?;
    put_u32(w, global.shape.a)?;
    put_u32(w, global.shape.b)?;
    put_u32(w, global.width)?;
    let layers: Vec<(Head, &Layer)> = [global, local]
        .iter()
        .flat_map(|m| m.layers.iter().map(move |l| (m.head, l)))
        .collect();
    put_u32(w, layers.len())?;
    for (head, l) in &layers {
        let s = &l.spec;
        let kind = match s.kind {
            LayerKind::Conv => 0,
            LayerKind::Dense => 1,
        };
        w.write_all(&[head_tag(*head), kind, axis_tag(s.axis), 0])?;
        for v in [s.cin, s.cout, s.groups, s.window, l.weights.len() + l.bias.len()] {
            put_u32(w, v)?;
        }
    }
    for (_, l) in &layers {
        for v in l.weights.iter().chain(&l.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_models(r: &mut impl Read) -> Result<(ValueModel, ValueModel)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let (a, b, width) = (get_u32(r)?, get_u32(r)?, get_u32(r)?);
    let shape = Shape::new(a, b)?;
    if width == 0 {
        return Err(Error::Checkpoint("zero width".into()));
    }
    let count = get_u32(r)?;
    let mut table = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let tags = [get_u8(r)?, get_u8(r)?, get_u8(r)?, get_u8(r)?];
        let head = match tags[0] {
            0 => Head::Global,
            1 => Head::Local,
            t => return Err(Error::Checkpoint(format!("unknown network tag {t}"))),
        };
        let kind = match tags[1] {
            0 => LayerKind::Conv,
            1 => LayerKind::Dense,
            t => return Err(Error::Checkpoint(format!("unknown layer kind {t}"))),
        };
        let axis = match tags[2] {
            0 => Axis::None,
            1 => Axis::X,
            2 => Axis::Y,
            t => return Err(Error::Checkpoint(format!("unknown axis {t}"))),
        };
        let spec = LayerSpec {
            kind,
            cin: get_u32(r)?,
            cout: get_u32(r)?,
            groups: get_u32(r)?,
            window: get_u32(r)?,
            axis,
        };
        table.push((head, spec, get_u32(r)?));
    }
    let mut out = Vec::new();
    for head in [Head::Global, Head::Local] {
        let specs: Vec<_> = table.iter().filter(|(h, _, _)| *h == head).collect();
        let expected = ValueModel::specs(shape, width, head);
        if specs.len() != expected.len() || specs.iter().zip(&expected).any(|((_, s, _), e)| s != e) {
            return Err(Error::Checkpoint(format!("layer table does not match the {} network", head.name())));
        }
        out.push((head, expected));
    }
    let mut layers: Vec<Vec<Layer>> = vec![Vec::new(), Vec::new()];
    for (head, spec, params) in &table {
        if *params != spec.weight_count() + spec.cout {
            return Err(Error::Checkpoint("parameter count does not match layer".into()));
        }
        let mut vals = Vec::with_capacity(*params);
        let mut buf = [0u8; 4];
        for _ in 0..*params {
            r.read_exact(&mut buf)?;
            vals.push(f32::from_le_bytes(buf));
        }
        let bias = vals.split_off(spec.weight_count());
        layers[head_tag(*head) as usize].push(Layer {
            spec: *spec,
            weights: vals,
            bias,
        });
    }
    let mut models = out.into_iter().zip(layers).map(|((head, _), layers)| ValueModel {
        head,
        shape,
        width,
        layers,
    });
    let global = models.next().expect("two networks");
    let local = models.next().expect("two networks");
    Ok((global, local))
}

pub fn save(path: &Path, global: &ValueModel, local: &ValueModel) -> Result<()> {
    let mut buf = Vec::new();
    write_models(&mut buf, global, local)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ValueModel, ValueModel)> {
    let bytes = std::fs::read(path)?;
    read_models(&mut bytes.as_slice())
}
