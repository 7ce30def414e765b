//! Binary checkpoints for bit-exact restarts.
//!
//! Layout (little endian): magic `PPMCKPT1`, step `u64`, time `f64`,
//! plastic flag `u8`, point count `u64`, then per-array blocks of `f64`
//! in the order u, v, a, F, bᵉ, τ, ζ, c, Δγ, ε_ps, ε_pv, base
//! displacement, and an optional work reference (flag `u8`, P̄, F).

use std::io::{Read, Write};
use std::path::Path;

use crate::dynamics::{NewmarkState, PointFields};
use crate::error::IoError;
use crate::lattice::{Mat2, Vec2};
use crate::tensor::Mat3;

use super::Checkpoint;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PPMCKPT1";

struct Out(Vec<u8>);

impl Out {
    fn f(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn all<'a>(&mut self, xs: impl IntoIterator<Item = &'a f64>) {
        for &x in xs {
            self.f(x);
        }
    }
    fn vec2(&mut self, v: &[Vec2]) {
        v.iter().for_each(|x| self.all(x.iter()));
    }
    fn mat2(&mut self, v: &[Mat2]) {
        v.iter().for_each(|x| self.all(x.iter()));
    }
    fn mat3(&mut self, v: &[Mat3]) {
        v.iter().for_each(|x| self.all(x.iter()));
    }
}

struct In<'a>(&'a [u8]);

impl In<'_> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], IoError> {
        if self.0.len() < N {
            return Err(bad("truncated checkpoint"));
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().unwrap())
    }
    fn f(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.bytes::<1>()?[0])
    }
    fn scalars(&mut self, n: usize) -> Result<Vec<f64>, IoError> {
        (0..n).map(|_| self.f()).collect()
    }
    fn vec2(&mut self, n: usize) -> Result<Vec<Vec2>, IoError> {
        (0..n).map(|_| Ok(Vec2::new(self.f()?, self.f()?))).collect()
    }
    fn mat2(&mut self, n: usize) -> Result<Vec<Mat2>, IoError> {
        (0..n).map(|_| Ok(Mat2::from_column_slice(&self.scalars(4)?))).collect()
    }
    fn mat3(&mut self, n: usize) -> Result<Vec<Mat3>, IoError> {
        (0..n).map(|_| Ok(Mat3::from_column_slice(&self.scalars(9)?))).collect()
    }
}

fn bad(msg: &str) -> IoError {
    IoError::new("reading checkpoint", std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string()))
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let mut o = Out(Vec::new());
    o.0.extend_from_slice(CHECKPOINT_MAGIC);
    o.0.extend_from_slice(&c.step.to_le_bytes());
    o.f(c.time);
    o.0.push(c.plastic as u8);
    o.0.extend_from_slice(&(c.state.len() as u64).to_le_bytes());
    o.vec2(&c.state.u);
    o.vec2(&c.state.v);
    o.vec2(&c.state.a);
    let p = &c.fields;
    o.mat2(&p.f);
    o.mat3(&p.be);
    o.mat3(&p.tau);
    for s in [&p.zeta, &p.cohesion, &p.dgamma, &p.eps_ps, &p.eps_pv] {
        o.all(s.iter());
    }
    o.vec2(&c.base_displacement);
    match &c.work_reference {
        Some((piola, f)) => {
            o.0.push(1);
            o.mat2(piola);
            o.mat2(f);
        }
        None => o.0.push(0),
    }
    o.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, IoError> {
    let mut r = In(bytes);
    if &r.bytes::<8>()? != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (bad magic or version)"));
    }
    let step = r.u64()?;
    let time = r.f()?;
    let plastic = r.u8()? != 0;
    let n = r.u64()? as usize;
    if n.saturating_mul(8) > bytes.len() {
        return Err(bad("point count exceeds file size"));
    }
    let state = NewmarkState {
        u: r.vec2(n)?,
        v: r.vec2(n)?,
        a: r.vec2(n)?,
    };
    let fields = PointFields {
        f: r.mat2(n)?,
        be: r.mat3(n)?,
        tau: r.mat3(n)?,
        zeta: r.scalars(n)?,
        cohesion: r.scalars(n)?,
        dgamma: r.scalars(n)?,
        eps_ps: r.scalars(n)?,
        eps_pv: r.scalars(n)?,
    };
    let base_displacement = r.vec2(n)?;
    let work_reference = match r.u8()? {
        0 => None,
        _ => Some((r.mat2(n)?, r.mat2(n)?)),
    };
    if !r.0.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint {
        step,
        time,
        plastic,
        state,
        fields,
        base_displacement,
        work_reference,
    })
}

pub fn write_checkpoint(c: &Checkpoint, path: &Path) -> Result<(), IoError> {
    let ctx = || format!("writing {}", path.display());
    let mut file = std::fs::File::create(path).map_err(|e| IoError::new(ctx(), e))?;
    file.write_all(&encode_checkpoint(c)).map_err(|e| IoError::new(ctx(), e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| IoError::new(format!("reading {}", path.display()), e))?;
    decode_checkpoint(&bytes)
}
