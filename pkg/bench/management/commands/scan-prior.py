import numpy as np

from common.commands import ToolkitCommand
from common.exceptions import ConfigError
from common.models import RunRecord
from priors.scan import dimer_scan, write_profile_csv
from priors.stack import build_prior_stack


class Command(ToolkitCommand):
    help = "Energy of one prior term along a two-atom distance scan"
    kind = RunRecord.Kind.SCAN_PRIOR

    def run(self, config, **options):
        stack = build_prior_stack(
            config.prior_model,
            atomref=config.atomref,
            coulomb_switch=config.coulomb_switch,
            d2_s6=config.d2_s6,
            d2_steep=config.d2_steep,
        )
        if len(stack) != 1:
            raise ConfigError("scan-prior needs exactly one term in prior_model")
        z_i, z_j = config.scan_species
        q_i, q_j = config.scan_charges
        profile = dimer_scan(
            stack.terms[0],
            z_i,
            z_j,
            np.linspace(config.scan_min, config.scan_max, config.scan_points),
            q_i,
            q_j,
            cutoff_upper=config.cutoff_upper,
        )
        output = options.get("output")
        if output:
            with open(output, "w", encoding="utf-8") as stream:
                write_profile_csv(profile, stream)
            self.stdout.write(
                self.style.SUCCESS(f"{len(profile.distances)} points written to {output}")
            )
        else:
            write_profile_csv(profile, self.stdout)
        return {"points": len(profile.distances), "term": stack.terms[0].name}
