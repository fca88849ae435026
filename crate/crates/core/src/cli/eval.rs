//! `bounds-eval`: evaluates one closed-form bound from `key=value` arguments.

use std::collections::BTreeMap;

use crate::bounds::{
    chisq_cube_moment_bound, chisq_lower_tail_bound, chisq_upper_tail_bound, heavy_tail_bound_q2, heavy_tail_bound_q3,
    max_chisq_bound, rosenthal_bound, sample_complexity_upper, BoundConstants, SampleComplexityQuery,
};
use crate::error::{Error, Result};

use super::format::g17;

struct Param {
    key: &'static str,
    default: Option<f64>,
}

const fn req(key: &'static str) -> Param {
    Param { key, default: None }
}

const fn opt(key: &'static str, default: f64) -> Param {
    Param {
        key,
        default: Some(default),
    }
}

struct Evaluator {
    name: &'static str,
    params: &'static [Param],
}

pub const NAMES: [&str; 8] = [
    "sample_complexity_upper",
    "chisq_upper_tail",
    "chisq_lower_tail",
    "heavy_q3",
    "heavy_q2",
    "max_chisq",
    "rosenthal",
    "cube_moment",
];

const EVALUATORS: [Evaluator; 8] = [
    Evaluator {
        name: "sample_complexity_upper",
        params: &[
            req("k"),
            req("m"),
            req("d"),
            req("delta"),
            opt("x_min", 1.0),
            opt("x_max", 1.0),
            opt("sigma2", 0.0),
            opt("c", 1.0),
        ],
    },
    Evaluator {
        name: "chisq_upper_tail",
        params: &[opt("n", 1.0), opt("mu", 0.0), opt("sigma", 1.0), req("t")],
    },
    Evaluator {
        name: "chisq_lower_tail",
        params: &[opt("n", 1.0), opt("mu", 0.0), opt("sigma", 1.0), req("t")],
    },
    Evaluator {
        name: "heavy_q3",
        params: &[opt("n", 1.0), opt("m", 1.0), req("t"), opt("c", 1.0)],
    },
    Evaluator {
        name: "heavy_q2",
        params: &[opt("n", 1.0), opt("m", 1.0), req("t"), opt("c", 1.0)],
    },
    Evaluator {
        name: "max_chisq",
        params: &[req("n"), req("m"), req("mu_max"), req("t")],
    },
    Evaluator {
        name: "rosenthal",
        params: &[req("p"), req("n"), req("lp"), req("l2"), opt("c", 1.0)],
    },
    Evaluator {
        name: "cube_moment",
        params: &[req("p"), req("m")],
    },
];

/// The CSV header and row for `name` evaluated at `args` (each `key=value`).
pub fn bounds_eval(name: &str, args: &[String]) -> Result<(String, String)> {
    let ev = EVALUATORS.iter().find(|e| e.name == name).ok_or_else(|| {
        Error::config(
            "name",
            format!("unknown bound `{name}`; valid names: {}", NAMES.join(", ")),
        )
    })?;
    let mut given = BTreeMap::new();
    for arg in args {
        let (k, v) = arg
            .split_once('=')
            .ok_or_else(|| Error::config(arg.clone(), "arguments must have the form key=value"))?;
        if !ev.params.iter().any(|p| p.key == k) {
            let keys: Vec<&str> = ev.params.iter().map(|p| p.key).collect();
            return Err(Error::config(
                k,
                format!("not a parameter of {name}; expected {}", keys.join(", ")),
            ));
        }
        let v: f64 = v
            .parse()
            .map_err(|_| Error::config(k, format!("`{v}` is not a number")))?;
        if given.insert(k.to_string(), v).is_some() {
            return Err(Error::config(k, "given twice"));
        }
    }
    let mut vals = Vec::with_capacity(ev.params.len());
    for p in ev.params {
        let v = given
            .get(p.key)
            .copied()
            .or(p.default)
            .ok_or_else(|| Error::config(p.key, format!("required by {name}")))?;
        vals.push(v);
    }
    let (value, warning) = evaluate(name, &vals)?;
    let mut header = String::from("name");
    let mut row = name.to_string();
    for (p, v) in ev.params.iter().zip(&vals) {
        header.push(',');
        header.push_str(p.key);
        row.push(',');
        row.push_str(&g17(*v));
    }
    header.push_str(",value,regime_warning");
    row.push(',');
    row.push_str(&value);
    row.push(',');
    row.push_str(match warning {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    });
    Ok((header, row))
}

fn count(key: &str, v: f64) -> Result<usize> {
    if v.fract() != 0.0 || !(1.0..=1e15).contains(&v) {
        return Err(Error::config(key, format!("{v} is not a positive integer")));
    }
    Ok(v as usize)
}

fn constant(c: f64) -> Result<BoundConstants> {
    let k = BoundConstants {
        c_heavy: c,
        c_sample: c,
        rosenthal_c: c,
    };
    k.validate()?;
    Ok(k)
}

fn evaluate(name: &str, v: &[f64]) -> Result<(String, Option<bool>)> {
    let value = match name {
        "sample_complexity_upper" => {
            let q = SampleComplexityQuery {
                k: count("k", v[0])?,
                m: count("m", v[1])?,
                d: count("d", v[2])?,
                delta: v[3],
                x_min: v[4],
                x_max: v[5],
                sigma2: v[6],
            };
            let s = sample_complexity_upper(&q, &constant(v[7])?)?;
            return Ok((s.n.to_string(), Some(s.outside_regime)));
        }
        "chisq_upper_tail" | "chisq_lower_tail" => {
            let n = count("n", v[0])?;
            let (mu, sigma2) = (vec![v[1]; n], vec![v[2] * v[2]; n]);
            if name == "chisq_upper_tail" {
                chisq_upper_tail_bound(&mu, &sigma2, v[3])?
            } else {
                chisq_lower_tail_bound(&mu, &sigma2, v[3])?
            }
        }
        "heavy_q3" => heavy_tail_bound_q3(count("n", v[0])?, count("m", v[1])?, v[2], &constant(v[3])?)?,
        "heavy_q2" => heavy_tail_bound_q2(count("n", v[0])?, count("m", v[1])?, v[2], &constant(v[3])?)?,
        "max_chisq" => max_chisq_bound(count("n", v[0])?, count("m", v[1])?, v[2], v[3])?,
        "rosenthal" => rosenthal_bound(v[0], count("n", v[1])?, v[2], v[3], &constant(v[4])?)?,
        "cube_moment" => chisq_cube_moment_bound(v[0], count("m", v[1])?)?,
        _ => unreachable!("name checked against the evaluator table"),
    };
    Ok((g17(value), None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn value(row: &str) -> f64 {
        row.split(',').rev().nth(1).unwrap().parse().unwrap()
    }

    #[test]
    fn sample_complexity_example() {
        let (h, r) = bounds_eval("sample_complexity_upper", &args("k=10 m=2 d=100 delta=0.1")).unwrap();
        assert_eq!(h, "name,k,m,d,delta,x_min,x_max,sigma2,c,value,regime_warning");
        assert_eq!(r, "sample_complexity_upper,10,2,100,0.10000000000000001,1,1,0,1,173,1");
    }

    #[test]
    fn chisq_upper_example() {
        let (_, r) = bounds_eval("chisq_upper_tail", &args("n=1 sigma=1 mu=0 t=2")).unwrap();
        assert!((value(&r) - 0.778801).abs() < 5e-7, "{r}");
        assert!(r.ends_with(','));
    }

    #[test]
    fn heavy_at_zero_is_one() {
        let (_, r) = bounds_eval("heavy_q3", &args("t=0")).unwrap();
        assert_eq!(value(&r), 1.0);
    }

    #[test]
    fn errors_name_the_problem() {
        let e = bounds_eval("lemma7", &[]).unwrap_err().to_string();
        assert!(NAMES.iter().all(|n| e.contains(n)), "{e}");
        assert!(bounds_eval("heavy_q3", &args("z=1"))
            .unwrap_err()
            .to_string()
            .contains("`z`"));
        assert!(bounds_eval("heavy_q3", &[]).unwrap_err().to_string().contains("`t`"));
        assert!(bounds_eval("heavy_q3", &args("t=x")).is_err());
        assert!(bounds_eval("heavy_q3", &args("t=1 n=2.5")).is_err());
    }

    #[test]
    fn table_and_names_agree() {
        assert!(EVALUATORS.iter().map(|e| e.name).eq(NAMES));
    }
}
