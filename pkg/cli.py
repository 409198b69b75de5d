"""
Weeding Robot MCU — Command Line
=================================
    python cli.py run --scenario 1 --cycles 1000 --mode det --seed 7 --out s1.csv
    python cli.py run --scenario 1 --pc-replay capture.bin
    python cli.py summary
    python cli.py codec encode --kind velocity --wheel 50 --steering -12.5
    python cli.py codec decode 7E02002A

Exit code is 0 only when no cycle exceeded its budget and no cycle
reported an error.
"""

import argparse
import logging
import sys
from dataclasses import replace

from analysis.report import format_summary
from analysis.runner import emit_csv, run_scenario
from analysis.scenarios import load_scenario
from config import get_config, load_config, set_config
from firmware.errors import WeedbotError
from firmware.messages import Order, OrderKind, decode_frames, encode_frame

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _setup_logging(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )


def _config(args):
    cfg = load_config(args.config) if args.config else get_config()
    if getattr(args, 'cycle_ms', None):
        cfg = cfg.with_overrides(timer__first_ms=args.cycle_ms)
    return set_config(cfg)


def _scenario(ref, args):
    scenario = load_scenario(ref, cycles=args.cycles, source=args.source)
    if getattr(args, 'cycle_ms', None):
        scenario = replace(scenario, cycle_budget_ms=float(args.cycle_ms))
    return scenario


# ============================================================
# COMMANDS
# ============================================================

def cmd_run(args):
    cfg = _config(args)
    scenario = _scenario(args.scenario, args)
    result = run_scenario(scenario, mode=args.mode, seed=args.seed, cfg=cfg, timing=args.timing,
                          rc_trace=args.rc_trace, dump_rc_trace=args.dump_rc_trace,
                          pc_replay=args.pc_replay, dump_pc_stream=args.dump_pc_stream)
    if args.out:
        emit_csv(result.metrics, args.out)
        print(f"Wrote {len(result.metrics)} rows to {args.out}")
    print(format_summary([result.summary]))
    return EXIT_OK if result.summary.ok else EXIT_FAILED


def cmd_summary(args):
    cfg = _config(args)
    summaries = []
    for ref in args.scenarios:
        result = run_scenario(_scenario(ref, args), mode=args.mode, seed=args.seed, cfg=cfg, timing='wall')
        summaries.append(result.summary)
    print(format_summary(summaries))
    return EXIT_OK if all(s.ok for s in summaries) else EXIT_FAILED


def cmd_encode(args):
    kind = OrderKind[args.kind.upper()]
    if kind == OrderKind.STOP:
        order = Order.stop()
    else:
        wheel = args.wheel[0] if len(args.wheel) == 1 else tuple(args.wheel)
        order = Order(kind, wheel, args.steering)
    print(encode_frame(order).hex(' ').upper())
    return EXIT_OK


def cmd_decode(args):
    data = bytes.fromhex(''.join(args.hex).replace(':', ''))
    failed = False
    for item in decode_frames(data):
        if isinstance(item, WeedbotError):
            failed = True
            print(f"dropped: {type(item).__name__}: {item}")
        else:
            print(item)
    return EXIT_FAILED if failed else EXIT_OK


# ============================================================
# ARGUMENTS
# ============================================================

def _add_run_options(p):
    p.add_argument('--cycles', type=int, default=None, help='control cycles (default 1000)')
    p.add_argument('--cycle-ms', type=float, default=None, help='control period and budget in ms')
    p.add_argument('--mode', choices=['det', 'threaded'], default='det')
    p.add_argument('--source', choices=['pc', 'rc'], default=None, help='order injection path')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--config', default=None, help='key=value config file')
    p.add_argument('-v', '--verbose', action='store_true')


def build_parser():
    parser = argparse.ArgumentParser(prog='weedbot', description='Weeding robot MCU simulator')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='run one scenario')
    run.add_argument('--scenario', default='1', help='1-4 or a scenario file')
    _add_run_options(run)
    run.add_argument('--timing', choices=['auto', 'wall', 'off'], default='auto')
    run.add_argument('--out', default=None, help='per-cycle CSV')
    run.add_argument('--rc-trace', default=None, help='replay a time_us,channel,level trace')
    run.add_argument('--dump-rc-trace', default=None, help='write the generated RC trace')
    run.add_argument('--pc-replay', default=None, help='feed a captured serial stream, one frame per cycle')
    run.add_argument('--dump-pc-stream', default=None, help='write the generated PC frames')
    run.set_defaults(func=cmd_run)

    summary = sub.add_parser('summary', help='timing table over several scenarios')
    summary.add_argument('--scenarios', nargs='+', default=['1', '2', '3', '4'])
    _add_run_options(summary)
    summary.set_defaults(func=cmd_summary)

    codec = sub.add_parser('codec', help='frame debugging')
    codec_sub = codec.add_subparsers(dest='codec_command', required=True)
    enc = codec_sub.add_parser('encode')
    enc.add_argument('--kind', choices=['velocity', 'tension', 'current', 'stop'], default='velocity')
    enc.add_argument('--wheel', type=float, nargs='+', default=[0.0], help='one value or four')
    enc.add_argument('--steering', type=float, default=0.0)
    enc.add_argument('-v', '--verbose', action='store_true')
    enc.set_defaults(func=cmd_encode)
    dec = codec_sub.add_parser('decode')
    dec.add_argument('hex', nargs='+', help='frame bytes in hex')
    dec.add_argument('-v', '--verbose', action='store_true')
    dec.set_defaults(func=cmd_decode)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except (WeedbotError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
