//! `RDBC`: a small length-prefixed little-endian columnar file format.
//!
//! ```text
//! "RDBC" | version: u16 | table name: str | column count: u32
//! per column:
//!   name: str | dtype tag: u8 | flags: u8 (bit0 = time column)
//!   [vector] dim: u32
//!   [foreign key] target table: str | target column: str
//!   row count: u64 | validity bitmap: ceil(rows / 8) bytes, LSB first
//!   packed values (nulls hold a zero placeholder):
//!     float: f64 | int, datetime: i64 | vector: dim * f64
//!     categorical: dictionary size u32, dictionary strs, then u32 codes
//!     text: str per row | key: u8 tag (0 int, 1 str) then i64 or str
//! str = u32 byte length + UTF-8 bytes
//! ```

use super::{CategoricalColumn, ColumnData, ColumnRef, ColumnSpec, DType, KeyValue, Table, TableSchema, VectorColumn};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RDBC";
pub const VERSION: u16 = 1;

fn dtype_tag(d: DType) -> u8 {
    match d {
        DType::Float => 0,
        DType::Int => 1,
        DType::Categorical => 2,
        DType::Datetime => 3,
        DType::Text => 4,
        DType::Vector => 5,
        DType::PrimaryKey => 6,
        DType::ForeignKey => 7,
    }
}

fn tag_dtype(t: u8) -> Result<DType> {
    Ok(match t {
        0 => DType::Float,
        1 => DType::Int,
        2 => DType::Categorical,
        3 => DType::Datetime,
        4 => DType::Text,
        5 => DType::Vector,
        6 => DType::PrimaryKey,
        7 => DType::ForeignKey,
        other => return Err(Error::Format(format!("unknown dtype tag {other}"))),
    })
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn bitmap(&mut self, valid: impl Iterator<Item = bool>, n: usize) {
        let mut bytes = vec![0u8; n.div_ceil(8)];
        for (i, ok) in valid.enumerate() {
            if ok {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        self.buf.extend_from_slice(&bytes);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
    fn bitmap(&mut self, n: usize) -> Result<Vec<bool>> {
        let bytes = self.take(n.div_ceil(8))?;
        Ok((0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect())
    }
}

pub fn encode_table(table: &Table) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.str(&table.schema.name);
    w.u32(table.schema.columns.len() as u32);
    let n = table.row_count;
    for (spec, data) in table.schema.columns.iter().zip(&table.columns) {
        w.str(&spec.name);
        w.u8(dtype_tag(spec.dtype));
        w.u8(spec.is_time_column as u8);
        if spec.dtype == DType::Vector {
            w.u32(spec.dim.unwrap_or(0) as u32);
        }
        if spec.dtype == DType::ForeignKey {
            let target = spec.fk_target.clone().unwrap_or_else(|| ColumnRef::new("", ""));
            w.str(&target.table);
            w.str(&target.column);
        }
        w.u64(n as u64);
        w.bitmap((0..n).map(|i| !data.is_null(i)), n);
        match data {
            ColumnData::Float(v) => v.iter().for_each(|x| w.f64(x.unwrap_or(0.0))),
            ColumnData::Int(v) | ColumnData::Datetime(v) => v.iter().for_each(|x| w.i64(x.unwrap_or(0))),
            ColumnData::Categorical(c) => {
                w.u32(c.dictionary.len() as u32);
                c.dictionary.iter().for_each(|s| w.str(s));
                c.codes.iter().for_each(|x| w.u32(x.unwrap_or(0)));
            }
            ColumnData::Text(v) => v.iter().for_each(|x| w.str(x.as_deref().unwrap_or(""))),
            ColumnData::Vector(c) => {
                for x in &c.values {
                    match x {
                        Some(vals) => vals.iter().for_each(|f| w.f64(*f)),
                        None => (0..c.dim).for_each(|_| w.f64(0.0)),
                    }
                }
            }
            ColumnData::Key(v) => {
                for x in v {
                    match x {
                        Some(KeyValue::Str(s)) => {
                            w.u8(1);
                            w.str(s);
                        }
                        Some(KeyValue::Int(i)) => {
                            w.u8(0);
                            w.i64(*i);
                        }
                        None => {
                            w.u8(0);
                            w.i64(0);
                        }
                    }
                }
            }
        }
    }
    w.buf
}

pub fn decode_table(bytes: &[u8]) -> Result<Table> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected RDBC".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let name = r.str()?;
    let ncols = r.u32()? as usize;
    let mut specs = Vec::with_capacity(ncols);
    let mut columns = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        let col_name = r.str()?;
        let dtype = tag_dtype(r.u8()?)?;
        let flags = r.u8()?;
        let mut spec = ColumnSpec::new(col_name, dtype);
        spec.is_time_column = flags & 1 != 0;
        if dtype == DType::Vector {
            spec.dim = Some(r.u32()? as usize);
        }
        if dtype == DType::ForeignKey {
            let t = r.str()?;
            let c = r.str()?;
            spec.fk_target = Some(ColumnRef::new(t, c));
        }
        let n = r.u64()? as usize;
        let valid = r.bitmap(n)?;
        let data = match dtype {
            DType::Float => {
                let mut v = Vec::with_capacity(n);
                for ok in &valid {
                    let x = r.f64()?;
                    v.push(ok.then_some(x));
                }
                ColumnData::Float(v)
            }
            DType::Int | DType::Datetime => {
                let mut v = Vec::with_capacity(n);
                for ok in &valid {
                    let x = r.i64()?;
                    v.push(ok.then_some(x));
                }
                if dtype == DType::Int {
                    ColumnData::Int(v)
                } else {
                    ColumnData::Datetime(v)
                }
            }
            DType::Categorical => {
                let dn = r.u32()? as usize;
                let dictionary = (0..dn).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
                let mut codes = Vec::with_capacity(n);
                for ok in &valid {
                    let x = r.u32()?;
                    if *ok && x as usize >= dn {
                        return Err(Error::Format(format!("category code {x} out of range")));
                    }
                    codes.push(ok.then_some(x));
                }
                ColumnData::Categorical(CategoricalColumn { codes, dictionary })
            }
            DType::Text => {
                let mut v = Vec::with_capacity(n);
                for ok in &valid {
                    let s = r.str()?;
                    v.push(ok.then_some(s));
                }
                ColumnData::Text(v)
            }
            DType::Vector => {
                let dim = spec.dim.unwrap_or(0);
                let mut values = Vec::with_capacity(n);
                for ok in &valid {
                    let row = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    values.push(ok.then_some(row));
                }
                ColumnData::Vector(VectorColumn { dim, values })
            }
            DType::PrimaryKey | DType::ForeignKey => {
                let mut v = Vec::with_capacity(n);
                for ok in &valid {
                    let key = match r.u8()? {
                        0 => KeyValue::Int(r.i64()?),
                        1 => KeyValue::Str(r.str()?),
                        t => return Err(Error::Format(format!("unknown key tag {t}"))),
                    };
                    v.push(ok.then_some(key));
                }
                ColumnData::Key(v)
            }
        };
        specs.push(spec);
        columns.push(data);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last column".into()));
    }
    Table::new(TableSchema::new(name, specs), columns)
}
