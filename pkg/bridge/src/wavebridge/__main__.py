"""Command-line launcher: `python -m wavebridge [--scorer ...] [--tcp ...]`."""

from __future__ import annotations

import argparse
import sys

from . import (
    COUNT_CLASSES,
    EVENT_CLASSES,
    band_event_detector,
    energy_count_scorer,
    serve,
    serve_tcp,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavebridge",
        description="Serve a reference audio scorer over the bridge protocol.",
    )
    parser.add_argument(
        "--scorer",
        choices=("events", "counts"),
        default="events",
        help="events: band-energy event detector; counts: onset counter",
    )
    parser.add_argument(
        "--tcp",
        metavar="HOST:PORT",
        default=None,
        help="listen on TCP instead of stdio; port 0 picks a free port, "
        "announced on stderr",
    )
    parser.add_argument("--name", default=None, help="server name reported in the handshake")
    args = parser.parse_args(argv)

    if args.scorer == "events":
        scorer, classes = band_event_detector(), EVENT_CLASSES
    else:
        scorer, classes = energy_count_scorer(), COUNT_CLASSES
    name = args.name or ("wavebridge-" + args.scorer)

    if args.tcp is None:
        serve(scorer, classes, name=name)
        return 0
    host, _, port_text = args.tcp.rpartition(":")
    if not host or not port_text.isdigit():
        parser.error("--tcp expects HOST:PORT")
    try:
        serve_tcp(scorer, classes, host=host, port=int(port_text), name=name)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
