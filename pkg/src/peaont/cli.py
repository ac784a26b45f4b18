"""Command-line front end: split, merge, plan, bench, inspect.

Exit codes: 0 ok, 2 bad parameters, 3 key error, 4 I/O or data error,
5 insufficient storage sites.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from .baselines import get_scheme
from .block_model import (
    MAGIC,
    CipherId,
    Manifest,
    SchemeId,
    SecurityLevel,
    read_fragment_header,
    validate_params,
)
from .cipher import KEY_FILE_ENV, load_key
from .dispersal import Strategy, fetch, find_manifest, load_sites, plan_placement, store
from .errors import (
    CipherKeyError,
    DigestMismatchError,
    FragmentFormatError,
    InsecureCipherError,
    InsufficientSitesError,
    IntegrityError,
    MissingFragmentError,
    ParamError,
    SchemeMismatchError,
)

EXIT_OK = 0
EXIT_PARAMS = 2
EXIT_KEY = 3
EXIT_IO = 4
EXIT_SITES = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _params(args):
    try:
        params = validate_params(args.k, args.e, 16, args.cipher)
    except ParamError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from exc
    return params


def _key(args, key_length: int = 16) -> bytes:
    try:
        return load_key(args.key, key_length)
    except CipherKeyError as exc:
        raise CliError(EXIT_KEY, str(exc)) from exc


def _sites(path):
    try:
        return load_sites(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read site list: {exc}") from exc
    except ParamError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from exc


def _scheme(name: str, allow_insecure: bool):
    try:
        return get_scheme(name, allow_insecure=allow_insecure)
    except (ParamError, KeyError) as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from exc


def cmd_split(args) -> int:
    params = _params(args)
    scheme = _scheme(args.scheme, args.allow_insecure)
    try:
        scheme.check_params(params)
        scheme.cipher_for(params)
    except ParamError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from exc
    except InsecureCipherError as exc:
        raise CliError(EXIT_PARAMS, f"{exc} (use --allow-insecure)") from exc
    level = params.security_level
    if scheme.scheme_id is SchemeId.PE_AONT and level is SecurityLevel.PERFORMANCE_ONLY and not args.allow_weak:
        raise CliError(
            EXIT_PARAMS,
            f"(k={params.k}, e={params.e}) gives no key-exposure protection "
            "(needs even k >= 4 and e >= 3); pass --allow-weak to proceed",
        )
    key = _key(args)
    try:
        data = Path(args.infile).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read input: {exc}") from exc
    if not data:
        raise CliError(EXIT_PARAMS, "input file is empty")
    sites = _sites(args.sites)
    try:
        plan = plan_placement(params, sites, args.strategy)
    except InsufficientSitesError as exc:
        raise CliError(EXIT_SITES, str(exc)) from exc
    try:
        fs, manifest = scheme.protect(data, params, key, mac=not args.no_mac)
    except ParamError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from exc
    except CipherKeyError as exc:
        raise CliError(EXIT_KEY, str(exc)) from exc
    try:
        written = store(fs, manifest, plan)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    if level is SecurityLevel.PERFORMANCE_ONLY and scheme.scheme_id is SchemeId.PE_AONT:
        print(f"warning: security level {level.value}", file=sys.stderr)
    if args.verbose:
        for p in written:
            print(p, file=sys.stderr)
    print(manifest.digest_hex())
    return EXIT_OK


def cmd_merge(args) -> int:
    sites = _sites(args.sites)
    try:
        if args.manifest and os.path.isfile(args.manifest):
            manifest = Manifest.from_json(Path(args.manifest).read_bytes())
        else:
            manifest = find_manifest(sites, args.manifest)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    except (FragmentFormatError, ParamError, OSError) as exc:
        raise CliError(EXIT_IO, f"bad manifest: {exc}") from exc
    scheme = _scheme(manifest.scheme.value, args.allow_insecure)
    try:
        scheme.cipher_for(manifest.params)
    except InsecureCipherError as exc:
        raise CliError(EXIT_PARAMS, f"{exc} (use --allow-insecure)") from exc
    key = _key(args)
    try:
        fs = fetch(manifest, sites)
        data = scheme.recover(fs, manifest, key)
    except MissingFragmentError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    except (DigestMismatchError, FragmentFormatError, SchemeMismatchError) as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    except IntegrityError as exc:
        raise CliError(EXIT_KEY, f"integrity check failed: {exc}") from exc
    except CipherKeyError as exc:
        raise CliError(EXIT_KEY, str(exc)) from exc
    if len(data) != manifest.original_length:
        raise CliError(EXIT_IO, "recovered length differs from the manifest")
    out = Path(args.out)
    tmp = out.with_name(out.name + ".part")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write output: {exc}") from exc
    return EXIT_OK


def cmd_plan(args) -> int:
    params = _params(args)
    sites = _sites(args.sites)
    try:
        plan = plan_placement(params, sites, args.strategy)
    except InsufficientSitesError as exc:
        raise CliError(EXIT_SITES, str(exc)) from exc
    except ParamError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from exc
    doc = {
        "k": params.k,
        "e": params.e,
        "security_level": params.security_level.value,
        "strategy": Strategy.parse(args.strategy).value,
        "assignments": {str(i): plan.site_of(i) for i in range(params.k)},
    }
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(f"k={params.k} e={params.e} level={params.security_level.value}")
        for i in range(params.k):
            print(f"  fragment {i} -> {plan.site_of(i)}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        specs = [bench_mod.parse_scheme_spec(s, args.k) for s in args.schemes] if args.schemes else None
        sizes = [bench_mod.parse_size(s) for s in args.sizes]
        config = bench_mod.BenchConfig(
            schemes=specs or bench_mod.PE_AONT_CONFIGS + bench_mod.BASELINES,
            data_sizes=sizes,
            repetitions=args.reps,
            warmup_runs=args.warmup,
            cipher_id=CipherId.parse(args.cipher),
            seed=args.seed,
            direction=args.direction,
            allow_insecure=args.allow_insecure,
        )
        report = bench_mod.run_bench(config)
    except (ParamError, InsecureCipherError) as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from exc
    if args.csv:
        try:
            Path(args.csv).write_text(report.to_csv())
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write CSV: {exc}") from exc
    print(report.format_table())
    bad = report.counter_violations()
    for line in bad:
        print(f"counter law violated: {line}", file=sys.stderr)
    return 1 if bad else EXIT_OK


def cmd_inspect(args) -> int:
    try:
        with open(args.path, "rb") as fh:
            head = fh.read(4096)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.path}: {exc}") from exc
    try:
        if head[:4] == MAGIC:
            doc = read_fragment_header(head).to_dict()
            doc["file_bytes"] = os.path.getsize(args.path)
            kind = "fragment"
        elif head.lstrip()[:1] == b"{":
            doc = Manifest.from_json(Path(args.path).read_bytes()).to_dict()
            doc["manifest_digest"] = Manifest.from_dict(doc).digest_hex()
            kind = "manifest"
        else:
            raise FragmentFormatError(f"bad magic {head[:4]!r}: neither a fragment nor a manifest")
    except (FragmentFormatError, ParamError) as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(f"{kind}: {args.path}")
        for key, value in doc.items():
            if isinstance(value, list):
                print(f"  {key}:")
                for i, v in enumerate(value):
                    print(f"    [{i}] {v}")
            else:
                print(f"  {key}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="peaont", description="PE-AONT fragmentation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common_params(sp):
        sp.add_argument("--k", type=int, required=True, help="number of fragments")
        sp.add_argument("--e", type=int, required=True, help="number of encrypted fragments")
        sp.add_argument("--cipher", default=CipherId.AES_128.value, help="AES-128 or NULL-TEST")

    sp = sub.add_parser("split", help="fragment, transform and disperse a file")
    sp.add_argument("--in", dest="infile", required=True)
    common_params(sp)
    sp.add_argument("--sites", required=True, help="site list file")
    sp.add_argument("--key", help=f"raw key file (default ${KEY_FILE_ENV})")
    sp.add_argument("--scheme", default=SchemeId.PE_AONT.value)
    sp.add_argument("--strategy", default=Strategy.ROUND_ROBIN.value,
                    choices=[s.value for s in Strategy])
    sp.add_argument("--allow-weak", action="store_true",
                    help="accept parameters without key-exposure protection")
    sp.add_argument("--allow-insecure", action="store_true", help="permit the NULL-TEST cipher")
    sp.add_argument("--no-mac", action="store_true", help="omit the keyed plaintext check")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("merge", help="gather fragments and restore a file")
    sp.add_argument("--manifest", help="manifest file or digest (default: the only one present)")
    sp.add_argument("--sites", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--key", help=f"raw key file (default ${KEY_FILE_ENV})")
    sp.add_argument("--allow-insecure", action="store_true")
    sp.set_defaults(func=cmd_merge)

    sp = sub.add_parser("plan", help="show a placement plan")
    common_params(sp)
    sp.add_argument("--sites", required=True)
    sp.add_argument("--strategy", default=Strategy.ROUND_ROBIN.value,
                    choices=[s.value for s in Strategy])
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("bench", help="throughput and op-count benchmark")
    sp.add_argument("--schemes", nargs="+", help="e.g. 'PE-AONT(4,3)' ENC_SPLIT BASTION SFD")
    sp.add_argument("--sizes", nargs="+", default=["100MiB"])
    sp.add_argument("--reps", type=int, default=30)
    sp.add_argument("--warmup", type=int, default=1)
    sp.add_argument("--k", type=int, default=4, help="k for baselines without an explicit k")
    sp.add_argument("--cipher", default=CipherId.AES_128.value)
    sp.add_argument("--allow-insecure", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--direction", choices=["protect", "both"], default="protect")
    sp.add_argument("--csv", help="write per-measurement CSV here")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("inspect", help="print a fragment header or a manifest")
    sp.add_argument("path")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
