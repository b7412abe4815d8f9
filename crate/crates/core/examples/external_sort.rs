//! Sorts 200k keyed items with a 1 MiB buffer. Runs spill to disk and are
//! merged back lazily.

use flatlink::exec::{external_sort, ExecConfig, KeyedItem};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spill = tempfile::tempdir()?;
    let cfg = ExecConfig { memory_budget_bytes: 1 << 20, spill_dir: spill.path().into(), ..ExecConfig::default() };
    let mut rng = flatlink::synth::rng(7);
    let items = (0..200_000).map(|i| KeyedItem::new(format!("{:010}", rng.gen::<u32>()), 0, format!("item {i}")));

    let mut sorted = external_sort(items, &cfg)?;
    let mut prev: Option<Vec<u8>> = None;
    let mut n = 0;
    for item in sorted.by_ref() {
        let item = item?;
        if let Some(p) = &prev {
            assert!(*p <= item.key);
        }
        if n < 3 {
            println!("{} {}", String::from_utf8_lossy(&item.key), String::from_utf8_lossy(&item.value));
        }
        prev = Some(item.key);
        n += 1;
    }
    println!("{n} items in order, {:?}", sorted.stats());
    Ok(())
}
