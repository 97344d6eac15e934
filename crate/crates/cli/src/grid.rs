use anyhow::{bail, Context, Result};

/// Parses a grid: `a:b:step` (inclusive), `log:a:b:count` (geometric) or a
/// comma list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix("log:") {
        let parts = numbers(rest, ':')?;
        let [a, b, count] = parts[..] else {
            bail!("log grid must be log:start:stop:count, got '{text}'");
        };
        if !(a > 0.0 && b > 0.0) {
            bail!("log grid endpoints must be positive, got '{text}'");
        }
        if count.fract() != 0.0 || count < 1.0 {
            bail!("log grid count must be a positive integer, got {count}");
        }
        let count = count as usize;
        if count == 1 {
            return Ok(vec![a]);
        }
        let (la, lb) = (a.log10(), b.log10());
        return Ok((0..count)
            .map(|i| match i {
                0 => a,
                i if i == count - 1 => b,
                i => 10f64.powf(la + (lb - la) * i as f64 / (count - 1) as f64),
            })
            .collect());
    }
    if text.contains(':') {
        let parts = numbers(text, ':')?;
        let (a, b, step) = match parts[..] {
            [a, b] => (a, b, 1.0),
            [a, b, step] => (a, b, step),
            _ => bail!("range grid must be start:stop[:step], got '{text}'"),
        };
        if !(step > 0.0) || b < a {
            bail!("range grid needs step > 0 and stop >= start, got '{text}'");
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| a + i as f64 * step).collect());
    }
    numbers(text, ',')
}

fn numbers(text: &str, sep: char) -> Result<Vec<f64>> {
    text.split(sep)
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("'{s}' is not a number"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_grid("5:60:5").unwrap().len(), 12);
        assert_eq!(parse_grid("1:3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_grid("3,6,9").unwrap(), vec![3.0, 6.0, 9.0]);
        let g = parse_grid("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert!((g[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_grid() {
        let g = parse_grid("log:1e-9:1e-1:9").unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], 1e-9);
        assert_eq!(g[8], 1e-1);
        assert!((g[4] / 1e-5 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_garbage() {
        for bad in [
            "",
            "a,b",
            "5:1",
            "1:2:0",
            "log:0:1:3",
            "log:1:2",
            "log:1:2:2.5",
        ] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
