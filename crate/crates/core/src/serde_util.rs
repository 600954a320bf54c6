//! Serde adapters for the JSON layouts used on disk: complex numbers as
//! `[re, im]` pairs and matrices as lists of rows.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn pair(z: &Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair([re, im]: [f64; 2]) -> Complex64 {
    Complex64::new(re, im)
}

fn rows_of<T: nalgebra::Scalar + Copy, U>(m: &DMatrix<T>, f: impl Fn(T) -> U) -> Vec<Vec<U>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| f(m[(i, j)])).collect())
        .collect()
}

fn from_rows<T: nalgebra::Scalar + Copy, E: serde::de::Error>(rows: Vec<Vec<T>>) -> Result<DMatrix<T>, E> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(E::custom("ragged matrix"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub mod complex {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        pair(z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        Ok(unpair(<[f64; 2]>::deserialize(d)?))
    }
}

pub mod complex_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(d)?.into_iter().map(unpair).collect())
    }
}

pub mod complex_opt {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Option<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        z.as_ref().map(pair).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Complex64>, D::Error> {
        Ok(Option::<[f64; 2]>::deserialize(d)?.map(unpair))
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        rows_of(m, |x| x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        from_rows(Vec::<Vec<f64>>::deserialize(d)?)
    }
}

pub mod matrix_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|m| rows_of(m, |x| x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        Vec::<Vec<Vec<f64>>>::deserialize(d)?
            .into_iter()
            .map(from_rows)
            .collect()
    }
}

pub mod complex_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        rows_of(m, |z| pair(&z)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<Complex64>, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(rows.into_iter().map(|r| r.into_iter().map(unpair).collect()).collect())
    }
}
