//! Depth-map raster file: 16-byte header (magic, width, height, sentinel)
//! followed by row-major little-endian f32 depths.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::render::DepthMap;

const MAGIC: &[u8; 4] = b"DPTH";

pub fn save_depth_raster(map: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(map.width).map_err(io)?;
    w.write_u32::<LittleEndian>(map.height).map_err(io)?;
    w.write_f32::<LittleEndian>(DepthMap::SENTINEL).map_err(io)?;
    for &d in &map.depth {
        w.write_f32::<LittleEndian>(d).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn load_depth_raster(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: not a depth raster",
            path.display()
        )));
    }
    let width = r.read_u32::<LittleEndian>().map_err(io)?;
    let height = r.read_u32::<LittleEndian>().map_err(io)?;
    let sentinel = r.read_f32::<LittleEndian>().map_err(io)?;
    let count = (width as usize) * (height as usize);
    let mut depth = vec![0f32; count];
    r.read_f32_into::<LittleEndian>(&mut depth).map_err(io)?;
    // Remap in case a foreign writer chose a different sentinel.
    if sentinel != DepthMap::SENTINEL {
        for d in depth.iter_mut() {
            if *d == sentinel {
                *d = DepthMap::SENTINEL;
            }
        }
    }
    Ok(DepthMap {
        width,
        height,
        depth,
    })
}
