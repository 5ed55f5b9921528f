"""
Benchmarking baseline against cascade
=====================================

Runs the instrumented harness on a couple of sizes and prints the CSV
rows plus the summary comparison. Sizes are kept small so this finishes
in seconds; the shipped defaults (N=1024, repeat>=11) are what the
headline numbers use.
"""

from cascadereg.bench import CSV_HEADER, run_bench, summarize

records = run_bench(sizes=[256, 512], modes=["baseline", "cascade"],
                    repeat=3, seed=0, threads=1)

print(CSV_HEADER)
for r in records:
    print(r.csv_row())

# The summary reports median wall-clock per mode and the measured
# ops_feat ratio next to the analytic one. The op ratio is exact and
# size-independent; the time ratio is noisier but tracks it, since
# feature extraction dominates the loop. Note the per-stage columns do
# not sum to t_total_ms: they cover the instrumented stages only, and
# setup (normal estimation) is excluded on purpose.
for line in summarize(records):
    print(line)
