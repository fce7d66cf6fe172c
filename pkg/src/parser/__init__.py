from src.parser.include_resolver import IncludeResolver
from src.parser.lint import Diagnostic, Severity, lint_profiles
from src.parser.profile_parser import ProfileParser, load_profile_dir, parse_profiles
from src.parser.serializer import serialize_profile, serialize_profile_set

__all__ = [
    'IncludeResolver', 'Diagnostic', 'Severity', 'lint_profiles',
    'ProfileParser', 'load_profile_dir', 'parse_profiles',
    'serialize_profile', 'serialize_profile_set',
]
