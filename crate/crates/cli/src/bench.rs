use std::path::Path;

use anyhow::{anyhow, Context};
use vrgl_bridge::{benchmark_throughput, Broker};

use crate::{to_json_pretty, usage, write_output, BenchArgs, CliResult};

pub fn run(args: &BenchArgs, out: &Path) -> CliResult {
    if args.size == 0 || args.count == 0 {
        return Err(usage("--size and --count must be positive"));
    }
    let local;
    let endpoint = match args.connect {
        Some(a) => a,
        None => {
            local = Broker::bind("127.0.0.1:0").context("bind local broker")?;
            local.local_addr()
        }
    };
    let stats = benchmark_throughput(args.size, args.count, endpoint, args.seed);
    let json = to_json_pretty(&stats);
    write_output(out, "bench.json", &json)?;
    print!("{json}");
    if let Some(e) = &stats.error {
        return Err(anyhow!("benchmark failed: {e}").into());
    }
    if stats.loss > 0 || stats.out_of_order > 0 || stats.crc_failures > 0 {
        return Err(anyhow!(
            "integrity failure: loss={} out_of_order={} crc_failures={}",
            stats.loss,
            stats.out_of_order,
            stats.crc_failures
        )
        .into());
    }
    Ok(())
}
