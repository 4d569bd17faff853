"""Simulate a 4-shard session, then kill a member midway and recover."""
from swarmshard.simulator import inject_failure, reference_context

for bandwidth, label in ((1.25e8, "1 Gbit/s"), (1.25e7, "100 Mbit/s")):
    rates = [reference_context(bandwidth, b).run().tokens_per_second for b in (1, 32, 64)]
    print(f"{label:>10}: tokens/s at batch 1/32/64 =", [round(r, 1) for r in rates])

ctx = reference_context(batch_size=8, tokens=512)
trace = ctx.run()
print("\nhealthy run:", {k: round(v, 3) if isinstance(v, float) else v
                         for k, v in trace.summary().items()})

victim = trace.swarm[2]
failed = inject_failure(ctx, victim, at_time=trace.total_time / 2)
s = failed.summary()
print(f"\nnode {victim} fails at t={trace.total_time / 2:.2f}s")
print("  new swarm:", s["swarm"])
print("  steady rate after recovery:", round(s["tokens_per_second"], 1),
      " overall incl. downtime:", round(s["overall_tokens_per_second"], 1))
print("  total time:", round(s["total_time"], 2), "tokens:", s["tokens_completed"])
