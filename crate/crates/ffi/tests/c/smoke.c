#include <stdio.h>
#include <string.h>
#include "oscta.h"

#define EXPECT(c) do { if (!(c)) { fprintf(stderr, "failed: %s (line %d)\n", #c, __LINE__); return 1; } } while (0)

int main(void) {
    OsctaPolicy *pol = NULL;
    OsctaWhileProgram *prog = NULL;
    OsctaReport *rep = NULL;
    const char *policy = "{\"vars\": [\"g\", \"s\"], \"outputs\": [\"g\"]}";

    EXPECT(oscta_policy_from_json(policy, &pol) == OSCTA_STATUS_OK);
    EXPECT(oscta_while_parse("g := s == 1; if g then skip else skip fi", pol, &prog) == OSCTA_STATUS_OK);
    EXPECT(oscta_check_while(prog, pol, OSCTA_MODE_CONSTANT_TIME, &rep) == OSCTA_STATUS_OK);
    EXPECT(oscta_report_accepted(rep) == 1);
    char *json = oscta_report_json(rep);
    EXPECT(json != NULL && strstr(json, "\"accept\"") != NULL);
    oscta_string_free(json);
    oscta_report_free(rep);

    OsctaWhileProgram *bad = NULL;
    EXPECT(oscta_while_parse("g := ", pol, &bad) == OSCTA_STATUS_PARSE_ERROR);
    EXPECT(bad == NULL && oscta_last_error() != NULL);

    oscta_while_free(prog);
    oscta_policy_free(pol);
    printf("ok %s\n", oscta_version());
    return 0;
}
