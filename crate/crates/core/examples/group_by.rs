//! The map / shuffle / reduce engine on its own: counts triples per
//! predicate across two tagged inputs under a tiny memory budget, so the
//! sorters spill to disk.

use flatlink::exec::{run_group_by, Emitter, ExecConfig, GroupValues, RecordStream, ReduceError};
use flatlink::synth::{KbGenerator, KbShape};

fn count(key: &[u8], values: &mut GroupValues<'_>, out: &mut Emitter<'_>) -> Result<(), ReduceError> {
    let mut per_tag = [0u64; 2];
    for (tag, _) in values {
        per_tag[tag as usize] += 1;
    }
    out.emit(format!("{}\t{}\t{}", String::from_utf8_lossy(key), per_tag[0], per_tag[1]).as_bytes())?;
    Ok(())
}

fn predicates(label: &'static str, seed: u64) -> RecordStream<'static> {
    let gen = KbGenerator::new(KbShape::new(label, 2_000, 20_000), seed);
    Box::new(gen.map(move |t| Ok(t.predicate.replace(label, "kb").into_bytes())))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spill = tempfile::tempdir()?;
    let cfg = ExecConfig { partitions: 4, memory_budget_bytes: 256 << 10, spill_dir: spill.path().into(), parallelism: 2 };
    let inputs = vec![(0, predicates("alpha", 1)), (1, predicates("beta", 2))];
    let out = run_group_by(inputs, |_, rec| Ok(rec.to_vec()), count, &cfg)?;
    println!("{:?}", out.stats());
    println!("predicate\talpha\tbeta");
    for rec in out.records_by_key()? {
        let (_, line) = rec?;
        println!("{}", String::from_utf8(line)?);
    }
    Ok(())
}
