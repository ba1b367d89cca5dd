#include <stdio.h>
#include <string.h>

#include "nfrgen.h"

static int fail(const char *what) {
    const char *msg = nfr_last_error_message();
    fprintf(stderr, "%s: %s\n", what, msg ? msg : "(no message)");
    return 1;
}

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: smoke DATASET_DIR\n");
        return 2;
    }

    NfrMatchKind kind;
    if (nfr_classify_match("Reliability", "Safety", NULL, &kind) != NFR_STATUS_OK) return fail("classify");
    if (kind != NFR_MATCH_KIND_NEAR_MISS) return fail("kind");
    if (nfr_classify_match("Reliability", "Speed", NULL, &kind) != NFR_STATUS_UNKNOWN_ATTRIBUTE) return 1;

    char *prompt = NULL;
    const char *spec = "{\"techniques\":[\"role_assignment\"],\"frs\":[{\"id\":\"FR-1\",\"text\":\"Log in.\"}]}";
    if (nfr_build_prompt(spec, &prompt) != NFR_STATUS_OK) return fail("prompt");
    int has_fr = strstr(prompt, "FR-1") != NULL;
    nfr_string_free(prompt);
    if (!has_fr) return 1;

    NfrAnalyzer *analyzer = NULL;
    if (nfr_analyzer_open(argv[1], NULL, &analyzer) != NFR_STATUS_OK) return fail("open");
    char *text = NULL;
    if (nfr_analyzer_report_text(analyzer, &text) != NFR_STATUS_OK) return fail("report");
    printf("%s", text);
    nfr_string_free(text);
    nfr_analyzer_free(analyzer);
    return 0;
}
