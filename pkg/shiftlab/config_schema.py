import typing

from .config_key import ConfigKey
from .config_warning import ConfigWarning
from .errors import ShiftLabConfigError


class ConfigSchema:
    """
    A schema that defines every key a configuration may set
    """

    def __init__(self, keys: typing.Iterable[ConfigKey]):
        """
        :param keys: A list of ConfigKey objects with distinct names
        """
        keys = list(keys)
        if not keys:
            raise ShiftLabConfigError('A schema must have at least one key')
        names = [key.name for key in keys]
        if len(set(names)) != len(names):
            raise ShiftLabConfigError('The schema declares a key twice')
        self.keys = {key.name: key for key in keys}

    def validate(self, entries: typing.Mapping[str, str]) -> typing.List[ConfigWarning]:
        """
        Validates the raw values a configuration sets

        :param entries: Raw values by key path. Keys that are not set take their defaults
        :return: A list of ConfigWarning objects, in the order of the sorted key names
        """
        warnings = []
        for name in sorted(entries):
            if name not in self.keys:
                warnings.append(ConfigWarning('is not a known configuration key', value=name, key=name))
        for name in sorted(self.keys):
            warnings += self.keys[name].validate(entries.get(name, self.keys[name].default))
        return warnings

    def convert(self, entries: typing.Mapping[str, str]) -> typing.Dict[str, typing.Any]:
        """
        The typed value of every key of the schema, using the defaults for keys that are not set. The entries must
        have passed validation
        """
        return {
            name: key.convert(entries.get(name, key.default))
            for name, key in sorted(self.keys.items())
        }

    def get_key_names(self) -> typing.List[str]:
        return sorted(self.keys)
