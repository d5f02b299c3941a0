/* Minimal consumer of the C API: build with
 *   cc demo.c -I../include -L../../../target/debug -lrolegate_ffi -lpthread -ldl -lm
 */
#include <stdio.h>
#include "rolegate.h"

int main(void) {
    RgPaillierKeyPair *kp = NULL;
    if (rg_paillier_generate(128, 42, &kp) != RG_STATUS_OK) {
        fprintf(stderr, "keygen: %s\n", rg_last_error_message());
        return 1;
    }
    RgBuffer a, b, sum;
    rg_paillier_encrypt_i64(kp, 40, &a);
    rg_paillier_encrypt_i64(kp, 2, &b);
    if (rg_paillier_add(kp, a.data, a.len, b.data, b.len, &sum) != RG_STATUS_OK) {
        fprintf(stderr, "add: %s\n", rg_last_error_message());
        return 1;
    }
    int64_t v = 0;
    rg_paillier_decrypt_i64(kp, sum.data, sum.len, &v);
    printf("%lld\n", (long long)v);

    RgGateway *gw = NULL;
    RgClient *client = NULL;
    RgBuffer out;
    if (rg_gateway_demo(256, 1, &gw) != RG_STATUS_OK
        || rg_client_login(gw, "acme", "alice", "alice-pw", &client) != RG_STATUS_OK
        || rg_client_query(client, "SELECT name FROM employees WHERE dept = 'CS'", false, &out) != RG_STATUS_OK) {
        fprintf(stderr, "gateway: %s\n", rg_last_error_message());
        return 1;
    }
    printf("%.*s\n", (int)out.len, (const char *)out.data);

    rg_buffer_free(out);
    rg_client_free(client);
    rg_gateway_free(gw);
    rg_buffer_free(a);
    rg_buffer_free(b);
    rg_buffer_free(sum);
    rg_paillier_free(kp);
    return 0;
}
