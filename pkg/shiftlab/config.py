"""
Experiment configuration: flat ``key = value`` text with dotted key paths, validated against a schema of every key
the experiments understand.
"""
import dataclasses
import enum
import logging
import math
import os
import typing
from pathlib import Path

from .active_learning import ALConfig, StrategyKind
from .config_key import ConfigKey, NONE
from .config_schema import ConfigSchema
from .config_warning import ConfigWarning
from .data import DatasetSplit, ShiftSpec, batch_composition, gen_shifted_gaussians
from .errors import ShiftLabConfigError, ShiftLabDataIOError
from .images import FeatureKind, ImageFolderSpec, load_image_folder
from .model import Mode, TrainConfig
from .normalization import NormKind
from .stats import GridSpec
from .validation import (CanConvertValidation, CustomElementValidation, InListValidation, InRangeValidation,
                         IsDistinctValidation)

logger = logging.getLogger(__name__)

OUT_ENV = 'SHIFTLAB_OUT'
DEFAULT_OUT = 'shiftlab-out'


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ('true', 'yes', '1'):
        return True
    if lowered in ('false', 'no', '0'):
        return False
    raise ValueError('{!r} is not a boolean'.format(value))


def _int(*bounds, **kwargs) -> typing.List:
    return [CanConvertValidation(int), InRangeValidation(*bounds, **kwargs)]


def _float(*bounds, **kwargs) -> typing.List:
    return [CanConvertValidation(float), InRangeValidation(*bounds, **kwargs)]


def _choice(kind: typing.Type[enum.Enum]) -> typing.List:
    return [InListValidation([member.value for member in kind])]


_BOOL = [InListValidation(['true', 'false', 'yes', 'no', '1', '0'], case_sensitive=False)]
_POSITIVE = CustomElementValidation(lambda v: float(v) > 0, 'is not positive')
_FINITE = CustomElementValidation(lambda v: math.isfinite(float(v)), 'is not a finite number')

SCHEMA = ConfigSchema([
    ConfigKey('experiment.name', str, 'shiftlab',
              [CustomElementValidation(lambda v: v.strip() != '', 'is not a valid experiment name')]),

    ConfigKey('dataset.kind', str, 'synthetic', [InListValidation(['synthetic', 'folder'])]),
    ConfigKey('dataset.num_classes', int, '5', _int(2)),
    ConfigKey('dataset.dim', int, '2', _int(2)),
    ConfigKey('dataset.per_class', int, '55', _int(5)),
    ConfigKey('dataset.theta', float, repr(math.pi / 4), [CanConvertValidation(float), _FINITE]),
    ConfigKey('dataset.translation', float, '0.0, 0.0', [CanConvertValidation(float), _FINITE], multiple=True),
    ConfigKey('dataset.noise', float, '0.3', [CanConvertValidation(float), _FINITE & _POSITIVE]),
    ConfigKey('dataset.seed', int, '0', _int(0)),
    ConfigKey('dataset.root', str, NONE, optional=True),
    ConfigKey('dataset.image_size', int, '32, 32', _int(1), multiple=True),
    ConfigKey('dataset.features', FeatureKind, 'flatten', _choice(FeatureKind)),
    ConfigKey('dataset.pool_grid', int, '4', _int(1)),
    ConfigKey('dataset.augment', parse_bool, 'false', _BOOL),
    ConfigKey('dataset.max_zoom', float, '1.25', _float(1)),

    ConfigKey('train.lr', float, '0.001', _float(0)),
    ConfigKey('train.l2', float, '0.001', _float(0)),
    ConfigKey('train.momentum', float, '0.0', _float(0, 1)),
    ConfigKey('train.batch_size', int, '32', _int(2)),
    ConfigKey('train.epochs', int, '100', _int(0)),
    ConfigKey('train.runs', int, '3', _int(1)),
    ConfigKey('train.mode', Mode, 'UADA', _choice(Mode)),
    ConfigKey('train.norm', NormKind, 'TransNorm', _choice(NormKind)),
    ConfigKey('train.conf_weight', float, '1.0', _float(0)),
    ConfigKey('train.hidden', int, '64, 64', _int(1), multiple=True),
    ConfigKey('train.disc_hidden', int, '64', _int(1), multiple=True),
    ConfigKey('train.source_fraction', float, '0.5', [CanConvertValidation(float),
                                                      InRangeValidation(0, 1) & _POSITIVE]),
    ConfigKey('train.groups', int, '8', _int(1)),
    ConfigKey('train.norm_eps', float, '1e-05', [CanConvertValidation(float), _FINITE & _POSITIVE]),
    ConfigKey('train.norm_momentum', float, '0.1', [CanConvertValidation(float),
                                                    InRangeValidation(0, 1, True) & _POSITIVE]),
    ConfigKey('train.zero_init_head', parse_bool, 'false', _BOOL),

    ConfigKey('al.k', int, '10', _int(1)),
    ConfigKey('al.rounds', int, '30', _int(0)),
    ConfigKey('al.strategies', StrategyKind, 'Random', _choice(StrategyKind) + [IsDistinctValidation()],
              multiple=True),
    ConfigKey('al.lambda_divdis', float, '0.5', _float(0, 1, max_inclusive=True)),
    ConfigKey('al.emoc_lr', float, NONE, _float(0), optional=True),
    ConfigKey('al.emoc_eval_size', int, '100', _int(1)),
    ConfigKey('al.emoc_max_candidates', int, NONE, _int(1), optional=True),
    ConfigKey('al.certainty_most_certain', parse_bool, 'true', _BOOL),
    ConfigKey('al.late_k', int, NONE, _int(1), optional=True),
    ConfigKey('al.late_k_after', int, NONE, _int(0), optional=True),
    ConfigKey('al.reach_mpca', float, NONE, _float(0, 1, max_inclusive=True), optional=True),

    ConfigKey('grid.lrs', float, '0.001, 0.0001', _float(0), multiple=True),
    ConfigKey('grid.l2s', float, '0.001, 0.01, 0.05, 0.1, 0.15', _float(0), multiple=True),

    ConfigKey('run.seeds', int, NONE, _int(0) + [IsDistinctValidation()], multiple=True, optional=True),
    ConfigKey('run.workers', int, '1', _int(1)),

    ConfigKey('output.dir', str, NONE, optional=True),
    ConfigKey('output.timing', parse_bool, 'false', _BOOL),

    ConfigKey('significance.input', str, NONE, optional=True),
])


@dataclasses.dataclass(frozen=True)
class DatasetConfig:
    kind: str = 'synthetic'
    shift: ShiftSpec = ShiftSpec()
    root: typing.Optional[str] = None
    image_size: typing.Tuple[int, ...] = (32, 32)
    features: FeatureKind = FeatureKind.flatten
    pool_grid: int = 4
    augment: bool = False
    max_zoom: float = 1.25

    def image_spec(self) -> ImageFolderSpec:
        return ImageFolderSpec(self.root, tuple(self.image_size), self.features, self.pool_grid, self.augment,
                               max_zoom=self.max_zoom, seed=self.shift.seed)

    def load(self) -> DatasetSplit:
        """
        Generates the synthetic dataset or reads the image folder
        """
        if self.kind == 'folder':
            return load_image_folder(self.image_spec())
        return gen_shifted_gaussians(self.shift)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    name: str = 'shiftlab'
    dataset: DatasetConfig = DatasetConfig()
    train: TrainConfig = TrainConfig()
    al: ALConfig = ALConfig()
    strategies: typing.Tuple[StrategyKind, ...] = (StrategyKind.Random,)
    grid: GridSpec = GridSpec()
    seeds: typing.Optional[typing.Tuple[int, ...]] = None
    """The run seeds. None for 0..train.runs - 1"""
    workers: int = 1
    output_dir: typing.Optional[str] = None
    timing: bool = False
    """True to record wall-clock seconds in the results; False writes 0 so repeated runs are byte-identical"""
    significance_input: typing.Optional[str] = None
    reach_mpca: typing.Optional[float] = None
    """The mpca threshold whose annotation cost the active learning command reports, or None to skip it"""

    def run_seeds(self) -> typing.Tuple[int, ...]:
        return self.seeds if self.seeds is not None else tuple(range(self.train.runs))


def _from_values(values: typing.Mapping[str, typing.Any]) -> ExperimentConfig:
    shift = ShiftSpec(
        num_classes=values['dataset.num_classes'],
        dim=values['dataset.dim'],
        per_class=values['dataset.per_class'],
        theta=values['dataset.theta'],
        translation=values['dataset.translation'],
        noise=values['dataset.noise'],
        seed=values['dataset.seed'],
    )
    dataset = DatasetConfig(
        kind=values['dataset.kind'],
        shift=shift,
        root=values['dataset.root'],
        image_size=values['dataset.image_size'],
        features=values['dataset.features'],
        pool_grid=values['dataset.pool_grid'],
        augment=values['dataset.augment'],
        max_zoom=values['dataset.max_zoom'],
    )
    train = TrainConfig(
        lr=values['train.lr'],
        l2=values['train.l2'],
        momentum=values['train.momentum'],
        batch_size=values['train.batch_size'],
        epochs=values['train.epochs'],
        runs=values['train.runs'],
        mode=values['train.mode'],
        norm=values['train.norm'],
        conf_weight=values['train.conf_weight'],
        hidden=values['train.hidden'],
        disc_hidden=values['train.disc_hidden'],
        source_fraction=values['train.source_fraction'],
        groups=values['train.groups'],
        norm_eps=values['train.norm_eps'],
        norm_momentum=values['train.norm_momentum'],
        zero_init_head=values['train.zero_init_head'],
    )
    strategies = values['al.strategies']
    al = ALConfig(
        k=values['al.k'],
        rounds=values['al.rounds'],
        strategy=strategies[0] if strategies else StrategyKind.Random,
        lambda_divdis=values['al.lambda_divdis'],
        emoc_lr=values['al.emoc_lr'],
        emoc_eval_size=values['al.emoc_eval_size'],
        emoc_max_candidates=values['al.emoc_max_candidates'],
        certainty_most_certain=values['al.certainty_most_certain'],
        late_k=values['al.late_k'],
        late_k_after=values['al.late_k_after'],
    )
    return ExperimentConfig(
        name=values['experiment.name'],
        dataset=dataset,
        train=train,
        al=al,
        strategies=strategies,
        grid=GridSpec(values['grid.lrs'], values['grid.l2s']),
        seeds=values['run.seeds'],
        workers=values['run.workers'],
        output_dir=values['output.dir'],
        timing=values['output.timing'],
        significance_input=values['significance.input'],
        reach_mpca=values['al.reach_mpca'],
    )


def _to_values(cfg: ExperimentConfig) -> typing.Dict[str, typing.Any]:
    shift, train, al = cfg.dataset.shift, cfg.train, cfg.al
    return {
        'experiment.name': cfg.name,
        'dataset.kind': cfg.dataset.kind,
        'dataset.num_classes': shift.num_classes,
        'dataset.dim': shift.dim,
        'dataset.per_class': shift.per_class,
        'dataset.theta': shift.theta,
        'dataset.translation': shift.translation,
        'dataset.noise': shift.noise,
        'dataset.seed': shift.seed,
        'dataset.root': cfg.dataset.root,
        'dataset.image_size': cfg.dataset.image_size,
        'dataset.features': cfg.dataset.features,
        'dataset.pool_grid': cfg.dataset.pool_grid,
        'dataset.augment': cfg.dataset.augment,
        'dataset.max_zoom': cfg.dataset.max_zoom,
        'train.lr': train.lr,
        'train.l2': train.l2,
        'train.momentum': train.momentum,
        'train.batch_size': train.batch_size,
        'train.epochs': train.epochs,
        'train.runs': train.runs,
        'train.mode': train.mode,
        'train.norm': train.norm,
        'train.conf_weight': train.conf_weight,
        'train.hidden': train.hidden,
        'train.disc_hidden': train.disc_hidden,
        'train.source_fraction': train.source_fraction,
        'train.groups': train.groups,
        'train.norm_eps': train.norm_eps,
        'train.norm_momentum': train.norm_momentum,
        'train.zero_init_head': train.zero_init_head,
        'al.k': al.k,
        'al.rounds': al.rounds,
        'al.strategies': cfg.strategies,
        'al.lambda_divdis': al.lambda_divdis,
        'al.emoc_lr': al.emoc_lr,
        'al.emoc_eval_size': al.emoc_eval_size,
        'al.emoc_max_candidates': al.emoc_max_candidates,
        'al.certainty_most_certain': al.certainty_most_certain,
        'al.late_k': al.late_k,
        'al.late_k_after': al.late_k_after,
        'al.reach_mpca': cfg.reach_mpca,
        'grid.lrs': cfg.grid.lrs,
        'grid.l2s': cfg.grid.l2s,
        'run.seeds': cfg.seeds,
        'run.workers': cfg.workers,
        'output.dir': cfg.output_dir,
        'output.timing': cfg.timing,
        'significance.input': cfg.significance_input,
    }


def _format(value) -> str:
    if value is None:
        return NONE
    if isinstance(value, tuple):
        return ', '.join(_format(v) for v in value)
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_entries(text: str) -> typing.Tuple[typing.Dict[str, str], typing.List[ConfigWarning]]:
    """
    Splits configuration text into raw values by key. '#' starts a comment; blank lines are ignored

    :return: The raw values and warnings for malformed lines and repeated keys
    """
    entries = {}
    warnings = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key = key.strip()
        if not sep or not key:
            warnings.append(ConfigWarning('Line {} is not of the form key = value: {}'.format(number, line)))
            continue
        if key in entries:
            warnings.append(ConfigWarning('is set more than once', value=key, key=key))
        entries[key] = value.strip()
    return entries, warnings


def check_config(cfg: ExperimentConfig):
    """
    Checks the constraints that involve more than one key
    """
    train = cfg.train
    if train.mode.adversarial:
        try:
            batch_composition(train.batch_size, train.source_fraction)
        except ShiftLabConfigError as e:
            raise ShiftLabConfigError(
                'train.batch_size = {} cannot hold the 2 rows per domain {} needs: {}'.format(
                    train.batch_size, train.mode.value, e
                ),
                key='train.batch_size'
            ) from e
    if train.effective_norm() is NormKind.GroupNormWS:
        for width in train.hidden:
            if width % train.groups:
                raise ShiftLabConfigError(
                    'train.groups = {} does not divide the hidden width {}'.format(train.groups, width),
                    key='train.groups'
                )
    if not train.hidden:
        raise ShiftLabConfigError('The feature extractor needs at least one hidden layer', key='train.hidden')
    if cfg.dataset.kind == 'folder':
        if cfg.dataset.root is None:
            raise ShiftLabConfigError('A folder dataset needs dataset.root', key='dataset.root')
        if len(cfg.dataset.image_size) != 2:
            raise ShiftLabConfigError('dataset.image_size needs a width and a height', key='dataset.image_size')
        cfg.dataset.image_spec().validate()
    else:
        cfg.dataset.shift.validate()
    if not cfg.strategies:
        raise ShiftLabConfigError('At least one strategy is needed', key='al.strategies')
    if not cfg.grid.lrs or not cfg.grid.l2s:
        raise ShiftLabConfigError('The grid needs at least one lr and one l2', key='grid.lrs')
    cfg.al.validate()


def parse_config_text(text: str) -> ExperimentConfig:
    """
    Parses and validates configuration text. Every key that is not set takes its default

    :raises ShiftLabConfigError: With every ConfigWarning found, or naming the key of a failed cross-key check
    """
    entries, warnings = read_entries(text)
    warnings += SCHEMA.validate(entries)
    if warnings:
        first = warnings[0]
        message = 'The configuration is invalid:\n' + '\n'.join(str(w) for w in warnings)
        raise ShiftLabConfigError(message, key=first.key, warnings=warnings)
    cfg = _from_values(SCHEMA.convert(entries))
    check_config(cfg)
    return cfg


def parse_config(source: typing.Union[str, Path]) -> ExperimentConfig:
    """
    Parses a configuration file, or configuration text if source is a string that contains a '=' or a line break
    (an empty string is the empty configuration)
    """
    if isinstance(source, str) and (source == '' or '=' in source or '\n' in source):
        return parse_config_text(source)
    path = Path(source)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ShiftLabDataIOError('Could not read the configuration {}: {}'.format(path, e)) from e
    logger.info('Read the configuration %s', path)
    return parse_config_text(text)


def serialize_config(cfg: ExperimentConfig) -> str:
    """
    Every key of the configuration in sorted order, one ``key = value`` line each. Reals are written exactly, so
    parsing the text gives back an equal configuration
    """
    values = _to_values(cfg)
    return ''.join('{} = {}\n'.format(name, _format(values[name])) for name in SCHEMA.get_key_names())


def resolve_output_dir(cli_out: typing.Optional[str], cfg: ExperimentConfig,
                       environ: typing.Mapping[str, str] = None) -> Path:
    """
    The output directory: --out, then output.dir, then the SHIFTLAB_OUT environment variable, then ./shiftlab-out
    """
    environ = os.environ if environ is None else environ
    for candidate in (cli_out, cfg.output_dir, environ.get(OUT_ENV)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUT)
