#!/usr/bin/env python3
"""Toy language model speaking the engine's subprocess line protocol.

Handshake, then one JSON object per line in each direction:

    out: {"vocab_size": V, "bos_id": 0, "eos_id": 1}
    in:  {"prefix": [int, ...]}
    out: {"logprobs": [float, ...]}   # length V, exp-sum 1, no bos mass

The default distribution depends on the prefix length so round trips are
observable. Failure flags exist to exercise the engine's error paths.
"""

import argparse
import json
import math
import sys

LOG_ZERO = -1e30


def distribution(vocab_size, prefix, mode):
    weights = [0.0] * vocab_size
    for i in range(1, vocab_size):  # bos (id 0) stays at zero
        if mode == "uniform":
            weights[i] = 1.0
        else:  # prefix-dependent but deterministic
            weights[i] = 1.0 + (len(prefix) * 7 + i) % 5
    total = sum(weights)
    return [math.log(w / total) if w > 0 else LOG_ZERO for w in weights]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--words", type=int, default=3, help="non-special words; vocab = words + 2")
    parser.add_argument("--mode", choices=["uniform", "tilted"], default="tilted")
    parser.add_argument("--bad-handshake", action="store_true")
    parser.add_argument("--bad-length", action="store_true")
    parser.add_argument("--bad-norm", action="store_true")
    parser.add_argument("--bos-mass", action="store_true")
    parser.add_argument("--die-after", type=int, default=-1, help="exit after N responses")
    args = parser.parse_args()

    vocab_size = args.words + 2
    handshake = {"vocab_size": vocab_size + (3 if args.bad_handshake else 0),
                 "bos_id": 0, "eos_id": 1}
    print(json.dumps(handshake), flush=True)

    responses = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        prefix = request["prefix"]
        logprobs = distribution(vocab_size, prefix, args.mode)
        if args.bad_length:
            logprobs = logprobs[:-1]
        if args.bad_norm:
            logprobs = [lp - 0.5 if lp > LOG_ZERO else lp for lp in logprobs]
        if args.bos_mass:
            logprobs = [math.log(1.0 / vocab_size)] * vocab_size
        print(json.dumps({"logprobs": logprobs}), flush=True)
        responses += 1
        if args.die_after >= 0 and responses >= args.die_after:
            return


if __name__ == "__main__":
    main()
