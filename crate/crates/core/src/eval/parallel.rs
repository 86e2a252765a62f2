use crate::{Error, Result};

/// Worker count from `MMOT_THREADS`, 1 when unset.
pub fn thread_count() -> Result<usize> {
    match std::env::var("MMOT_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("MMOT_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

/// Maps `f` over `items` on up to `threads` scoped workers; output order follows input order.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..37).collect();
        let one = parallel_map(&items, 1, |x| x * x);
        for t in [2, 3, 8, 100] {
            assert_eq!(parallel_map(&items, t, |x| x * x), one);
        }
        assert!(parallel_map(&[] as &[u64], 4, |x| *x).is_empty());
    }
}
