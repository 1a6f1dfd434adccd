#!/usr/bin/env python3
"""Micro-benchmark: raw per-file reads vs sequential tar-shard reads.

Builds a synthetic dataset twice (one file pair per sample, and packed
shards), then times one full epoch of each and counts storage opens.
Shard mode's advantage scales with payload size and storage latency; on a
hot local page cache with tiny payloads the Python tar machinery can win
or lose, so the open counts are the stable signal.
"""

import argparse
import shutil
import tempfile
import time
from pathlib import Path

from ctcdec.uio import LocalStorage, RawSampleReader, SampleRecord, pack_shards, read_shards


class CountingStorage(LocalStorage):
    def __init__(self):
        self.opens = 0

    def open_read(self, locator):
        self.opens += 1
        return super().open_read(locator)


def synth_records(n, payload_bytes):
    for i in range(n):
        yield SampleRecord(
            key=f"utt{i:06d}",
            payloads={
                "wav": (i % 251).to_bytes(1, "big") * payload_bytes,
                "txt": f"transcript for utterance {i}".encode(),
            },
            metadata={"index": str(i)},
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--records", type=int, default=2000)
    parser.add_argument("--payload-bytes", type=int, default=32768)
    parser.add_argument("--shard-size", type=int, default=1000)
    parser.add_argument("--gzip", action="store_true")
    parser.add_argument("--workdir", help="keep artifacts here instead of a temp dir")
    args = parser.parse_args()

    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="uio_bench_"))
    raw_dir = workdir / "raw"
    shard_dir = workdir / "shards"
    raw_dir.mkdir(parents=True, exist_ok=True)

    print(f"building {args.records} samples ({args.payload_bytes} B payloads) under {workdir}")
    lines = []
    for record in synth_records(args.records, args.payload_bytes):
        (raw_dir / f"{record.key}.wav").write_bytes(record.payloads["wav"])
        (raw_dir / f"{record.key}.txt").write_bytes(record.payloads["txt"])
        lines.append(f"{record.key} {record.key}.wav {record.key}.txt")
    manifest = raw_dir / "raw.list"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    shards = pack_shards(synth_records(args.records, args.payload_bytes), args.shard_size, shard_dir, compress=args.gzip)

    raw_storage = CountingStorage()
    reader = RawSampleReader.from_file(manifest, storage=raw_storage)
    t0 = time.perf_counter()
    raw_bytes = sum(r.total_bytes() for r in reader)
    raw_time = time.perf_counter() - t0

    shard_storage = CountingStorage()
    t0 = time.perf_counter()
    shard_bytes = sum(r.total_bytes() for r in read_shards(shards, storage=shard_storage))
    shard_time = time.perf_counter() - t0
    assert raw_bytes == shard_bytes, "modes disagree on payload bytes"

    def row(name, seconds, opens):
        rate = args.records / seconds
        mb = raw_bytes / seconds / 1e6
        print(f"  {name:<6} {seconds:8.3f} s   {rate:10,.0f} rec/s   {mb:8.1f} MB/s   {opens:7d} opens")

    print(f"\none epoch over {args.records} records:")
    row("raw", raw_time, raw_storage.opens)
    row("shard", shard_time, shard_storage.opens)
    speedup = (raw_time - shard_time) / raw_time * 100.0
    print(f"\nshard vs raw wall time: {speedup:+.2f}%")
    print(f"open operations: {shard_storage.opens} (shard) vs {raw_storage.opens} (raw)")

    if not args.workdir:
        shutil.rmtree(workdir)


if __name__ == "__main__":
    main()
