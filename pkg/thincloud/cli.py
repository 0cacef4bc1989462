'''
Command line interface.

```
thincloud synth --n 200 --side 32 --seed 7 --out data/
thincloud train --data data/ --steps 2000 --heads 4 --seed 7 --out run/
thincloud eval --data data/ --checkpoint run/checkpoint.bin --out report.csv
thincloud bench --dims 32 --sizes 256,1024,4096 --reps 7 --out bench.csv
thincloud gradcheck --seed 0
thincloud ablate --data data/ --arms conv,1,2,4 --steps 2000 --out ablation.csv
```

Exit codes: 0 success, 1 usage error, 2 runtime failure.
'''

import argparse
import logging
import os
import sys
from typing import List
from .common.exception import (ThinCloudException, UsageError)


EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class ArgumentParser(argparse.ArgumentParser):
    '''Report invalid arguments with exit code 1.'''

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def _int_list(text:str) -> List[int]:
    try:
        values = [int(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'expect comma separated integers, got "{text}"') from e
    if not values: raise argparse.ArgumentTypeError('empty list')
    return values


def _positive(text:str) -> int:
    try:
        value = int(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'expect an integer, got "{text}"') from e
    if value<=0: raise argparse.ArgumentTypeError(f'expect a positive integer, got {value}')
    return value


def _nonnegative(text:str) -> int:
    try:
        value = int(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'expect an integer, got "{text}"') from e
    if value<0: raise argparse.ArgumentTypeError(f'expect a nonnegative integer, got {value}')
    return value


# ------------------------------
# commands
# ------------------------------
def cmd_synth(args) -> int:
    from .data.dataset import (MIN_PAIRS, make_dataset, write_dataset)
    from .data.synth import CloudParams
    if args.n<MIN_PAIRS: raise UsageError(f'--n must be at least {MIN_PAIRS}.')
    params = CloudParams(octaves=args.octaves, alpha_max=args.alpha_max)
    train, test = make_dataset(args.n, args.side, args.seed, params)
    write_dataset(args.out, train, test)
    print(f'{args.n} pairs ({len(train)} train, {len(test)} test), side {args.side}, '
          f'seed {args.seed} -> {args.out}')
    return EXIT_OK


def _load_pairs(args):
    '''(train, test) from a dataset root or from paired cloud/label directories.'''
    from .data.dataset import (load_dataset, load_paired_dir)
    if args.cloud_dir or args.label_dir:
        if not (args.cloud_dir and args.label_dir):
            raise UsageError('--cloud-dir and --label-dir go together.')
        seed = 7 if args.seed is None else args.seed
        return load_paired_dir(args.cloud_dir, args.label_dir, args.allow_skip, seed)
    if not args.data: raise UsageError('Give --data, or --cloud-dir with --label-dir.')
    return load_dataset(args.data)


def _image_side(pairs) -> int:
    shape = pairs[0].cloudy.shape
    if shape[1]!=shape[2]: raise UsageError(f'Square images expected, got {shape[1]}x{shape[2]}.')
    return shape[1]


def cmd_train(args) -> int:
    from .common.config import (build_config, load_config)
    from .gan.trainer import train_loop
    from .model.checkpoint import load_checkpoint
    train, test = _load_pairs(args)
    cfg = load_config(args.config)
    gen_cfg = build_config(type(cfg['generator']), vars(cfg['generator']), heads=args.heads,
                           encoder=args.encoder, side=_image_side(train),
                           base_channels=args.base_channels, levels=args.levels)
    train_cfg = build_config(type(cfg['train']), vars(cfg['train']), steps=args.steps,
                             seed=args.seed, batch_size=args.batch_size, lr=args.lr,
                             freeze_discriminator=args.freeze_discriminator or None)
    loss = build_config(type(cfg['loss']), vars(cfg['loss']), lambda_c=args.lambda_c,
                        saturating=args.saturating or None)
    resume = load_checkpoint(args.resume) if args.resume else None

    _, rows = train_loop(train, test, train_cfg, gen_cfg, cfg['discriminator'], loss,
                         out_dir=args.out, resume=resume)
    if args.plot and rows:
        from .common.plot import plot_training_curves
        plot_training_curves(rows, os.path.join(args.out, 'training.png'))
    last = rows[-1] if rows else None
    if last and last['psnr_eval'] is not None:
        print(f'step {last["step"]}: held-out psnr {last["psnr_eval"]:.4f} dB, ssim {last["ssim_eval"]:.4f}')
    print(f'checkpoint: {os.path.join(args.out, "checkpoint.bin")}')
    return EXIT_OK


def load_generator(path:str):
    '''Rebuild the generator stored in a checkpoint.'''
    from .common.config import build_config
    from .model.checkpoint import load_checkpoint
    from .model.network import (Generator, GeneratorConfig)
    ckpt = load_checkpoint(path)
    gen = Generator(build_config(GeneratorConfig, ckpt.config.get('generator')), seed=ckpt.seed)
    ckpt.restore_params(gen.params)
    return gen


def cmd_eval(args) -> int:
    from .evaluation.report import evaluate_pairs
    train, test = _load_pairs(args)
    pairs = {'train': train, 'test': test, 'all': train + test}[args.split]
    gen = load_generator(args.checkpoint) if args.checkpoint else None
    report = evaluate_pairs(pairs, gen)
    if args.out: report.to_csv(args.out)
    if args.samples:
        from .common.plot import plot_samples
        rows = [(p.cloudy, gen.forward(p.cloudy), p.clear) if gen else (p.cloudy, p.clear)
                for p in pairs[:4]]
        plot_samples(rows, args.samples)
    for note in report.notes: logging.warning(note)
    print(report.summary())
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench.benchmark import (BenchConfig, BenchMark)
    bench = BenchMark(BenchConfig(tuple(args.sizes), args.dims, args.reps))
    records = bench.run()
    if args.out: bench.to_csv(args.out, append=args.append)
    if args.plot:
        from .common.plot import plot_bench_scaling
        plot_bench_scaling(records, args.plot)
    print(bench.summary())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .autodiff.gradcheck import default_suite
    suite = default_suite(args.seed, args.max_coords, networks=not args.primitives_only)
    suite.run()
    print(suite.summary())
    for r in suite.failures():
        logging.error('%s failed: max rel err %.3e > %.0e at %s', r.name, r.max_rel_err,
                      r.tolerance, r.worst_index)
    return EXIT_OK if suite.passed else EXIT_FAILURE


def cmd_ablate(args) -> int:
    from .bench.ablation import (AblationRunner, parse_arms)
    from .common.config import (build_config, load_config)
    train, test = _load_pairs(args)
    cfg = load_config(args.config)
    base = build_config(type(cfg['generator']), vars(cfg['generator']), side=_image_side(train))
    train_cfg = build_config(type(cfg['train']), vars(cfg['train']), steps=args.steps,
                             seed=args.seed, batch_size=args.batch_size)
    runner = AblationRunner(parse_arms(args.arms, base), train, test, train_cfg, cfg['loss'],
                            cfg['discriminator'], num_threads=args.threads)
    results = runner.run()
    if args.out: runner.to_csv(args.out, append=args.append)
    print(runner.summary())
    return EXIT_OK if all(r.status for r in results) else EXIT_FAILURE


# ------------------------------
# parser
# ------------------------------
def _add_data_args(parser, required:bool=False):
    parser.add_argument('--data', required=required, help='dataset root written by "synth"')
    parser.add_argument('--cloud-dir', help='folder of cloudy images, paired by file name')
    parser.add_argument('--label-dir', help='folder of clear images, paired by file name')
    parser.add_argument('--allow-skip', action='store_true', help='skip unpaired or unreadable files')


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='thincloud', description='Linear-attention cGAN for thin cloud removal.')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser('synth', help='generate a synthetic paired dataset')
    p.add_argument('--n', type=int, default=200, help='number of pairs (at least 5)')
    p.add_argument('--side', type=_positive, default=32)
    p.add_argument('--seed', type=int, default=7)
    p.add_argument('--octaves', type=_positive, default=3)
    p.add_argument('--alpha-max', type=float, default=0.9)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('train', help='train the cGAN, write checkpoint and metrics CSV')
    _add_data_args(p)
    p.add_argument('--steps', type=_nonnegative)
    p.add_argument('--heads', type=_positive)
    p.add_argument('--encoder', choices=('attention', 'conv'))
    p.add_argument('--base-channels', type=_positive)
    p.add_argument('--levels', type=_positive)
    p.add_argument('--batch-size', type=_positive)
    p.add_argument('--lr', type=float)
    p.add_argument('--lambda', dest='lambda_c', type=float, help='L1 weight of every channel')
    p.add_argument('--saturating', action='store_true', help='generator minimizes log(1 - D)')
    p.add_argument('--freeze-discriminator', action='store_true')
    p.add_argument('--seed', type=int)
    p.add_argument('--config', help='JSON file with generator/discriminator/loss/train sections')
    p.add_argument('--resume', help='continue from this checkpoint')
    p.add_argument('--plot', action='store_true', help='save training curves next to the checkpoint')
    p.add_argument('--out', required=True, help='output folder')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='PSNR/SSIM report, baseline without --checkpoint')
    _add_data_args(p)
    p.add_argument('--checkpoint')
    p.add_argument('--split', choices=('train', 'test', 'all'), default='test')
    p.add_argument('--seed', type=int, default=7, help='split seed of paired directories')
    p.add_argument('--samples', help='save a cloudy/generated/clear grid to this image')
    p.add_argument('--out', help='report CSV')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('bench', help='scaling of softmax vs linear attention')
    p.add_argument('--dims', type=_positive, default=32)
    p.add_argument('--sizes', type=_int_list, default=[256, 1024, 4096])
    p.add_argument('--reps', type=_positive, default=7)
    p.add_argument('--append', action='store_true', help='append to an existing CSV')
    p.add_argument('--plot', help='save the scaling plot to this image')
    p.add_argument('--out', help='CSV file')
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser('gradcheck', help='finite-difference check of all backward rules')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--max-coords', type=_positive, default=6, help='sampled coordinates per network param')
    p.add_argument('--primitives-only', action='store_true')
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser('ablate', help='train one generator per encoder arm')
    _add_data_args(p)
    p.add_argument('--arms', default='conv,1,2,4', help='comma separated: conv and/or head counts')
    p.add_argument('--steps', type=_nonnegative)
    p.add_argument('--batch-size', type=_positive)
    p.add_argument('--seed', type=int)
    p.add_argument('--threads', type=_positive, default=1)
    p.add_argument('--config')
    p.add_argument('--append', action='store_true')
    p.add_argument('--out', help='CSV file')
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv:List[str]=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(asctime)s %(threadName)s] %(message)s",
        datefmt='%Y-%m-%d %H:%M:%S')
    try:
        return args.func(args)
    except UsageError as e:
        logging.error('%s', e)
        return EXIT_USAGE
    except (ThinCloudException, OSError) as e:
        logging.error('%s failed: %s', args.command, e)
        return EXIT_FAILURE
