"""
Configuration utilities for loading and managing application settings.
"""
import copy
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from loguru import logger

# Load environment variables from .env file
load_dotenv()

# Define base paths
BASE_DIR = Path(__file__).resolve().parent.parent.parent
CONFIG_DIR = BASE_DIR / "config"
DEFAULT_CONFIG_PATH = CONFIG_DIR / "config.yaml"


def load_yaml_config(config_path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Load configuration from YAML file.
    
    Args:
        config_path: Path to the YAML config file. If None, uses the default config path.
        
    Returns:
        Dictionary containing the configuration.
        
    Raises:
        FileNotFoundError: If the config file doesn't exist.
        yaml.YAMLError: If the config file is invalid YAML.
    """
    config_path = Path(config_path or DEFAULT_CONFIG_PATH)
    
    if not config_path.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")
    
    try:
        with open(config_path, 'r') as f:
            loaded = yaml.safe_load(f) or {}
        logger.debug(f"Loaded configuration from {config_path}")
        return loaded
    except yaml.YAMLError as e:
        logger.error(f"Error parsing YAML configuration: {e}")
        raise


def get_env_variable(name: str, default: Optional[Any] = None) -> Any:
    """
    Get an environment variable or return a default value.
    
    Args:
        name: Name of the environment variable.
        default: Default value to return if the environment variable is not set.
        
    Returns:
        The value of the environment variable or the default value.
    """
    value = os.getenv(name, default)
    if isinstance(value, str):
        # Clean up the value by removing any comments
        value = value.split('#')[0].strip()
    return value


def merge_overrides(base: Dict[str, Any], overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Deep-merge an override mapping into a copy of the base configuration.
    
    Args:
        base: Default configuration.
        overrides: User supplied values; nested dictionaries are merged key by key.
        
    Returns:
        New merged dictionary. Neither input is modified.
    """
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_overrides(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_run_config(config_path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Load the defaults and apply a user configuration file on top, if given.
    
    Args:
        config_path: Optional YAML file with overrides.
        
    Returns:
        Merged configuration dictionary.
    """
    if config_path is None:
        return copy.deepcopy(config)
    return merge_overrides(config, load_yaml_config(Path(config_path)))


def get_merged_config() -> Dict[str, Any]:
    """
    Get a merged configuration from YAML and environment variables.
    Environment variables take precedence over YAML configuration.
    
    Returns:
        Dictionary containing the merged configuration.
    """
    merged = load_yaml_config()
    
    # Logging
    merged['logging']['level'] = get_env_variable('LSR_LOG_LEVEL', merged['logging']['level'])
    merged['logging']['log_file'] = get_env_variable('LSR_LOG_FILE', merged['logging']['log_file'])
    
    show_progress = get_env_variable('LSR_SHOW_PROGRESS')
    if show_progress is not None:
        merged['logging']['show_progress'] = show_progress.lower() == 'true'
    
    return merged


# Default configuration instance
config = get_merged_config()
